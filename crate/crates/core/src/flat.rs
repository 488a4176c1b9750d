//! Flat output `y(t) = phi(t) sum_n c_n zeta_n exp(-lambda_n t)` and its
//! derivatives, handled as Taylor coefficients `y^(i)(t) / i!` so that high
//! orders stay in floating-point range.

use flatness_model::gauss::NGL;

use crate::bump::{unscale, BumpSpec, TaylorData, ENDPOINT_GUARD};
use crate::canonical::CanonicalProblem;
use crate::error::{CoreError, Result};
use crate::fit::{fit_envelope, ln_factorial, GevreyFit};
use crate::spectral::EigenPair;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub c: f64,
    pub zeta: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct FlatOutput {
    pub modes: Vec<Mode>,
    pub bump: BumpSpec,
}

/// Taylor coefficients `a_j` held as `a_j r^j` with the scale `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledTaylor {
    pub coeffs: Vec<f64>,
    pub scale: f64,
}

impl ScaledTaylor {
    pub fn unscaled(&self) -> Vec<f64> {
        unscale(&self.coeffs, self.scale)
    }

    /// `sum_j a_j q_j` with every term formed in log space from `ln |q_j|`
    /// and the sign of `q_j`; returns the sum and the magnitude of the last term.
    pub fn dot_log(&self, ln_q: &[f64], sign_q: &[f64]) -> (f64, f64) {
        let lr = self.scale.ln();
        let mut acc = Kahan::default();
        let mut last = 0.0;
        for (j, a) in self.coeffs.iter().enumerate().take(ln_q.len()) {
            last = 0.0;
            if *a == 0.0 || sign_q[j] == 0.0 {
                continue;
            }
            let mag = (a.abs().ln() + ln_q[j] - j as f64 * lr).exp();
            last = mag;
            acc.add(a.signum() * sign_q[j] * mag);
        }
        (acc.value(), last)
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// `c_n = int u0_hat e_n rho_hat dy` over the canonical mesh.
pub fn project_initial(problem: &CanonicalProblem, pairs: &[EigenPair]) -> Vec<f64> {
    let u0: Vec<[f64; NGL]> = (0..problem.mesh.len())
        .map(|c| {
            let pts = problem.gl_points(c);
            pts.map(|y| (problem.u0_hat)(y))
        })
        .collect();
    pairs
        .iter()
        .map(|p| problem.weighted_integral(|c, k| u0[c][k] * p.e.gl(c, k)))
        .collect()
}

impl FlatOutput {
    pub fn new(coeffs: &[f64], pairs: &[EigenPair], bump: BumpSpec) -> Self {
        let modes = coeffs
            .iter()
            .zip(pairs)
            .map(|(&c, p)| Mode {
                c,
                zeta: p.zeta,
                lambda: p.lambda,
            })
            .collect();
        Self { modes, bump }
    }

    /// Taylor coefficients `w^(k)(t)/k!` of `w(t) = sum c_n zeta_n e^{-lambda_n t}`,
    /// each term formed in log space.
    pub fn w_taylor(&self, t: f64, max_order: usize) -> Vec<f64> {
        self.w_taylor_scaled(t, max_order, 1.0)
    }

    /// `w^(k)(t) r^k / k!`.
    pub fn w_taylor_scaled(&self, t: f64, max_order: usize, r: f64) -> Vec<f64> {
        let mut out = vec![Kahan::default(); max_order + 1];
        let lf: Vec<f64> = (0..=max_order).map(ln_factorial).collect();
        let lr = r.ln();
        for m in &self.modes {
            let amp = m.c * m.zeta;
            if amp == 0.0 {
                continue;
            }
            let base = amp.abs().ln() - m.lambda * t;
            let sign0 = amp.signum();
            if m.lambda == 0.0 {
                out[0].add(amp);
                continue;
            }
            let ll = m.lambda.abs().ln() + lr;
            // (-lambda)^k alternates for positive lambda
            let alt = m.lambda > 0.0;
            for (k, acc) in out.iter_mut().enumerate() {
                let mag = (base + k as f64 * ll - lf[k]).exp();
                let sign = if alt && k % 2 == 1 { -sign0 } else { sign0 };
                acc.add(sign * mag);
            }
        }
        out.iter().map(Kahan::value).collect()
    }

    /// Scaled Taylor coefficients of `y` at `t`, `t` in `[tau, T]`.
    pub fn y_taylor_scaled(&self, t: f64, max_order: usize) -> Result<ScaledTaylor> {
        let phi = self.bump.taylor(t, max_order)?;
        Ok(self.combine(&phi, t, max_order))
    }

    /// As [`Self::y_taylor_scaled`], with flat-region values within the endpoint guard.
    pub fn y_taylor_scaled_clamped(&self, t: f64, max_order: usize) -> Result<ScaledTaylor> {
        let phi = self.bump.taylor_clamped(t, max_order)?;
        Ok(self.combine(&phi, t, max_order))
    }

    /// Taylor coefficients of `y` at `t`, `t` in `[tau, T]`.
    pub fn y_taylor(&self, t: f64, max_order: usize) -> Result<Vec<f64>> {
        Ok(self.y_taylor_scaled(t, max_order)?.unscaled())
    }

    /// As [`Self::y_taylor`], with flat-region values within the endpoint guard.
    pub fn y_taylor_clamped(&self, t: f64, max_order: usize) -> Result<Vec<f64>> {
        Ok(self.y_taylor_scaled_clamped(t, max_order)?.unscaled())
    }

    fn combine(&self, phi: &TaylorData, t: f64, max_order: usize) -> ScaledTaylor {
        let r = phi.scale;
        if phi.scaled.iter().all(|&v| v == 0.0) {
            return ScaledTaylor {
                coeffs: vec![0.0; max_order + 1],
                scale: r,
            };
        }
        let w = self.w_taylor_scaled(t, max_order, r);
        let coeffs = (0..=max_order)
            .map(|i| {
                let mut acc = Kahan::default();
                for j in 0..=i {
                    acc.add(phi.scaled[j] * w[i - j]);
                }
                acc.value()
            })
            .collect();
        ScaledTaylor { coeffs, scale: r }
    }

    /// `y^(i)(t)` for `i = 0..=max_order`.
    pub fn y_derivs(&self, t: f64, max_order: usize) -> Result<Vec<f64>> {
        Ok(to_derivatives(&self.y_taylor(t, max_order)?))
    }

    /// Magnitude of the last retained mode in `w(t)`.
    pub fn last_mode_magnitude(&self, t: f64) -> f64 {
        self.modes
            .last()
            .map_or(0.0, |m| (m.c * m.zeta).abs() * (-m.lambda * t).exp())
    }

    /// Envelope `sup_t |y^(p)| <= M (p!)^s / R^p` fitted over `p = 1..=orders`
    /// on `samples` times in `[tau, T]`.
    pub fn gevrey_estimate(&self, orders: usize, samples: usize) -> Result<GevreyFit> {
        if orders < 5 {
            return Err(CoreError::FitDegenerate(format!("{orders} orders, at least 5 needed")));
        }
        let sups = self.sup_derivatives(orders, samples)?;
        let vals: Vec<(usize, f64)> = sups.into_iter().enumerate().skip(1).collect();
        fit_envelope(&vals, self.bump.s)
    }

    /// `sup_t |y^(p)(t)|` over sampled times strictly inside `(tau, T)` and `tau`.
    pub fn sup_derivatives(&self, orders: usize, samples: usize) -> Result<Vec<f64>> {
        let (tau, tf) = (self.bump.tau, self.bump.t_final);
        let lo = tau + 2.0 * ENDPOINT_GUARD;
        let hi = tf - 2.0 * ENDPOINT_GUARD;
        let mut sups = vec![0.0f64; orders + 1];
        let times = std::iter::once(tau).chain((0..samples).map(|j| lo + (hi - lo) * j as f64 / (samples - 1).max(1) as f64));
        for t in times {
            let d = self.y_derivs(t, orders)?;
            for (s, v) in sups.iter_mut().zip(&d) {
                *s = s.max(v.abs());
            }
        }
        Ok(sups)
    }
}

/// `a_i i!` for Taylor coefficients `a_i`.
pub fn to_derivatives(taylor: &[f64]) -> Vec<f64> {
    let mut fact = 1.0;
    taylor
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if i > 0 {
                fact *= i as f64;
            }
            a * fact
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{reduce, ReductionOptions};
    use crate::spectral::{eigenpairs, SpectralOptions};
    use approx::assert_relative_eq;
    use flatness_model::coeff::Smooth;
    use flatness_model::expr::Expr;
    use flatness_model::{ProblemSpec, RobinPair};
    use proptest::prelude::*;

    fn bump() -> BumpSpec {
        BumpSpec::new(1.6, 0.2, 0.4, 1.0).unwrap()
    }

    fn single(c: f64, zeta: f64, lambda: f64) -> FlatOutput {
        FlatOutput {
            modes: vec![Mode { c, zeta, lambda }],
            bump: bump(),
        }
    }

    #[test]
    fn projection_of_cosine() {
        let spec = ProblemSpec::heat(
            RobinPair::neumann(),
            RobinPair::neumann(),
            Smooth::Expr(Expr::parse("cos(pi*x)").unwrap()),
        );
        let cp = reduce(&spec, &ReductionOptions::default()).unwrap();
        let pairs = eigenpairs(&cp, 5, SpectralOptions::default()).unwrap();
        let c = project_initial(&cp, &pairs);
        assert_relative_eq!(c[1], 0.5f64.sqrt(), epsilon = 1e-10);
        for (n, v) in c.iter().enumerate() {
            if n != 1 {
                assert!(v.abs() < 1e-10, "{n} {v}");
            }
        }
        let flipped: Vec<_> = pairs.iter().map(EigenPair::flipped).collect();
        let cf = project_initial(&cp, &flipped);
        let f1 = FlatOutput::new(&c, &pairs, bump());
        let f2 = FlatOutput::new(&cf, &flipped, bump());
        assert_eq!(f1.y_taylor(0.27, 8).unwrap(), f2.y_taylor(0.27, 8).unwrap());
    }

    #[test]
    fn single_constant_mode_is_the_bump() {
        let f = single(1.0, 1.0, 0.0);
        let b = bump();
        for t in [0.21, 0.3, 0.37] {
            let y = f.y_derivs(t, 6).unwrap();
            let p = b.derivs(t, 6).unwrap();
            for (a, e) in y.iter().zip(&p) {
                assert_relative_eq!(*a, *e, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn values_at_tau_and_terminal_flatness() {
        let f = FlatOutput {
            modes: vec![
                Mode { c: 0.7, zeta: 1.0, lambda: 0.0 },
                Mode { c: 0.3, zeta: -2.0, lambda: 9.0 },
            ],
            bump: bump(),
        };
        let y = f.y_derivs(0.2, 3).unwrap();
        assert_relative_eq!(y[0], 0.7 - 0.6 * (-1.8f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(y[1], 0.6 * 9.0 * (-1.8f64).exp(), epsilon = 1e-14);
        assert!(f.y_derivs(0.4, 10).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn leibniz_matches_finite_differences() {
        let f = FlatOutput {
            modes: vec![
                Mode { c: 1.0, zeta: 1.0, lambda: 0.0 },
                Mode { c: 0.5, zeta: 1.4, lambda: 9.87 },
                Mode { c: -0.2, zeta: 1.4, lambda: 39.5 },
            ],
            bump: bump(),
        };
        let h = 1e-5;
        for t in [0.25, 0.28, 0.31, 0.34] {
            let d = f.y_derivs(t, 1).unwrap();
            let v = |k: f64| f.y_derivs(t + k * h, 0).unwrap()[0];
            let fd = (-v(2.0) + 8.0 * v(1.0) - 8.0 * v(-1.0) + v(-2.0)) / (12.0 * h);
            assert_relative_eq!(d[1], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn gevrey_fit_of_bump_alone() {
        let f = single(1.0, 1.0, 0.0);
        let g = f.gevrey_estimate(20, 41).unwrap();
        assert!(g.max_factor() < 10.0, "{g:?}");
        let g2 = single(2.0, 1.0, 0.0).gevrey_estimate(20, 41).unwrap();
        assert_relative_eq!(g2.c, 2.0 * g.c, max_relative = 1e-9);
        assert_relative_eq!(g2.r, g.r, max_relative = 1e-9);
        assert!(single(0.0, 1.0, 0.0).gevrey_estimate(20, 11).is_err());
    }

    proptest! {
        #[test]
        fn y_is_linear_in_coefficients(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, t in 0.21f64..0.39) {
            let mk = |a: f64, b: f64| FlatOutput {
                modes: vec![Mode { c: a, zeta: 1.0, lambda: 2.0 }, Mode { c: b, zeta: -1.0, lambda: 30.0 }],
                bump: bump(),
            };
            let s = mk(c1, c2).y_taylor(t, 6).unwrap();
            let a = mk(c1, 0.0).y_taylor(t, 6).unwrap();
            let b = mk(0.0, c2).y_taylor(t, 6).unwrap();
            for k in 0..=6 {
                prop_assert!((s[k] - a[k] - b[k]).abs() <= 1e-12 * (a[k].abs() + b[k].abs()) + 1e-300);
            }
        }
    }
}
