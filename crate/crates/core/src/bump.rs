//! Gevrey bump `phi`: equal to 1 up to `tau`, 0 from `T` on, and
//! `psi_M((T - t) / (T - tau))` in between with
//! `psi_M(theta) = 1 / (1 + exp(M theta^-k - M (1 - theta)^-k))`, `k = 1/(s-1)`.
//!
//! Derivatives come from Taylor coefficients computed by the trapezoidal rule
//! on a Cauchy contour. The contour never encloses a zero of
//! `1 + exp(G)` (checked by the argument principle) and, on the half of the
//! interval adjacent to `tau`, the complement `1 - phi` is expanded instead so
//! that nothing is lost to cancellation against 1.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Closest distance to `tau` or `T` at which derivatives are computed.
pub const ENDPOINT_GUARD: f64 = 1e-6;
const MIN_NODES: usize = 64;
const MAX_NODES: usize = 8192;
const AGREEMENT: f64 = 1e-10;
/// Rounding allowance per node, in units of `eps * max|f|`.
const ROUNDING_FLOOR: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpSpec {
    pub s: f64,
    pub tau: f64,
    pub t_final: f64,
    pub m: f64,
}

/// Taylor coefficients `f^(j)(t) / j!` of a bump at one point, with the
/// contour radius used.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorData {
    pub coeffs: Vec<f64>,
    /// `coeffs[j] * scale^j`, computed without forming `scale^j`.
    pub scaled: Vec<f64>,
    /// Contour radius, 1 where no contour was needed.
    pub scale: f64,
    pub radius: f64,
    pub nodes: usize,
}

impl TaylorData {
    fn exact(coeffs: Vec<f64>) -> Self {
        Self {
            scaled: coeffs.clone(),
            coeffs,
            scale: 1.0,
            radius: 0.0,
            nodes: 0,
        }
    }
}

/// `scaled[j] / r^j` formed in log space; zero stays zero.
pub fn unscale(scaled: &[f64], r: f64) -> Vec<f64> {
    let lr = r.ln();
    scaled
        .iter()
        .enumerate()
        .map(|(j, &s)| if s == 0.0 { 0.0 } else { s.signum() * (s.abs().ln() - j as f64 * lr).exp() })
        .collect()
}

impl BumpSpec {
    pub fn new(s: f64, tau: f64, t_final: f64, m: f64) -> Result<Self> {
        if !(s > 1.0) || !(tau > 0.0 && tau < t_final) || !(m > 0.0) {
            return Err(CoreError::DomainError(format!(
                "bump needs s > 1, 0 < tau < T and M > 0 (s = {s}, tau = {tau}, T = {t_final}, M = {m})"
            )));
        }
        Ok(Self { s, tau, t_final, m })
    }

    pub fn k(&self) -> f64 {
        1.0 / (self.s - 1.0)
    }

    fn theta(&self, z: Complex64) -> Complex64 {
        (self.t_final - z) / (self.t_final - self.tau)
    }

    fn exponent(&self, z: Complex64) -> Complex64 {
        let th = self.theta(z);
        let k = self.k();
        self.m * (th.powf(-k) - (1.0 - th).powf(-k))
    }

    /// `phi(z)` if `!complement`, else `1 - phi(z)`, in overflow-safe form.
    fn eval_c(&self, z: Complex64, complement: bool) -> Complex64 {
        let g = self.exponent(z);
        let g = if complement { -g } else { g };
        if g.re > 0.0 {
            let w = (-g).exp();
            w / (1.0 + w)
        } else {
            1.0 / (1.0 + g.exp())
        }
    }

    /// Phase of `1 + exp(G)` at a contour node as `(branch, im_part, arg_part)`:
    /// with `branch` set the phase is `Im G + arg(1 + exp(-G))`, otherwise
    /// `arg(1 + exp(G))`. The arg part always lies in `(-pi/2, pi/2)`.
    fn denominator_phase(&self, z: Complex64) -> (bool, f64, f64) {
        let g = self.exponent(z);
        if g.re > 0.0 {
            (true, g.im, (1.0 + (-g).exp()).arg())
        } else {
            (false, 0.0, (1.0 + g.exp()).arg())
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.tau {
            1.0
        } else if t >= self.t_final {
            0.0
        } else {
            self.eval_c(Complex64::new(t, 0.0), false).re
        }
    }

    /// Taylor coefficients `phi^(j)(t)/j!`, `j = 0..=max_order`.
    pub fn taylor(&self, t: f64, max_order: usize) -> Result<TaylorData> {
        let mut coeffs = vec![0.0; max_order + 1];
        if t <= self.tau {
            coeffs[0] = 1.0;
            return Ok(TaylorData::exact(coeffs));
        }
        if t >= self.t_final {
            return Ok(TaylorData::exact(coeffs));
        }
        let dist = (t - self.tau).min(self.t_final - t);
        if max_order > 0 && dist < ENDPOINT_GUARD {
            return Err(CoreError::OrderTooHigh { t, order: max_order });
        }
        if max_order == 0 {
            coeffs[0] = self.value(t);
            return Ok(TaylorData::exact(coeffs));
        }
        let complement = t < 0.5 * (self.tau + self.t_final);
        let mut radius = 0.5 * dist;
        let min_nodes = MIN_NODES.max((4 * (max_order + 1)).next_power_of_two());
        loop {
            match self.winding(t, radius, MIN_NODES) {
                Some((0, _)) => break,
                Some(_) => radius *= 0.75,
                // a pole on the circle keeps the phase unresolved
                None => radius *= 0.75,
            }
            if radius < 1e-3 * dist {
                return Err(CoreError::OrderTooHigh { t, order: max_order });
            }
        }
        // poles may sit just outside the certified circle; stay clear of them so
        // the trapezoid rule converges geometrically
        radius *= 0.75;
        let f = |z: Complex64| self.eval_c(z, complement);
        let (mut scaled, nodes) = contour_taylor_scaled(f, t, radius, max_order, min_nodes)
            .ok_or(CoreError::OrderTooHigh { t, order: max_order })?;
        if complement {
            scaled[0] = 1.0 - scaled[0];
            for v in &mut scaled[1..] {
                *v = -*v;
            }
        }
        Ok(TaylorData {
            coeffs: unscale(&scaled, radius),
            scaled,
            scale: radius,
            radius,
            nodes,
        })
    }

    /// As [`Self::taylor`], but within [`ENDPOINT_GUARD`] of `tau` or `T` the
    /// flat-region values are returned. There every derivative differs from its
    /// limit by a factor `exp(-M (guard / (T - tau))^-k)`, which underflows.
    pub fn taylor_clamped(&self, t: f64, max_order: usize) -> Result<TaylorData> {
        let mut t = t;
        if t > self.tau && t - self.tau < ENDPOINT_GUARD {
            t = self.tau;
        } else if t < self.t_final && self.t_final - t < ENDPOINT_GUARD {
            t = self.t_final;
        }
        self.taylor(t, max_order)
    }

    /// Derivatives `phi^(j)(t)`, `j = 0..=max_order`.
    pub fn derivs(&self, t: f64, max_order: usize) -> Result<Vec<f64>> {
        let td = self.taylor(t, max_order)?;
        let mut fact = 1.0;
        Ok(td
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if j > 0 {
                    fact *= j as f64;
                }
                a * fact
            })
            .collect())
    }

    /// Number of zeros of `1 + exp(G)` inside the circle, with the node count
    /// at which the phase was resolved. `None` if it never resolves.
    ///
    /// `Im G` is single valued on the disc, so its increments are summed
    /// exactly and only the bounded arg parts need resolving.
    fn winding(&self, t: f64, radius: f64, start_nodes: usize) -> Option<(i64, usize)> {
        let mut n = start_nodes;
        while n <= MAX_NODES {
            let phases: Vec<(bool, f64, f64)> = (0..n)
                .map(|m| {
                    let w = Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64);
                    self.denominator_phase(t + radius * w)
                })
                .collect();
            let mut total = 0.0;
            let mut resolved = true;
            for m in 0..n {
                let (b0, i0, a0) = phases[m];
                let (b1, i1, a1) = phases[(m + 1) % n];
                let d = if b0 == b1 {
                    let da = a1 - a0;
                    if da.abs() > 0.5 * PI {
                        resolved = false;
                        break;
                    }
                    (i1 - i0) + da
                } else {
                    let d = wrap((i1 + a1) - (i0 + a0));
                    if d.abs() > 0.5 * PI {
                        resolved = false;
                        break;
                    }
                    d
                };
                total += d;
            }
            let turns = total / (2.0 * PI);
            if resolved && (turns - turns.round()).abs() < 0.1 {
                return Some((turns.round() as i64, n));
            }
            n *= 2;
        }
        None
    }
}

fn wrap(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Taylor coefficients of `f` at `t` from `n` trapezoidal nodes on the circle
/// of radius `r`, doubling `n` until two successive sets agree relative to the
/// largest scaled coefficient, or down to the rounding floor `eps * max|f|`.
pub fn contour_taylor(
    f: impl Fn(Complex64) -> Complex64,
    t: f64,
    r: f64,
    max_order: usize,
    start_nodes: usize,
) -> Option<(Vec<f64>, usize)> {
    contour_taylor_scaled(f, t, r, max_order, start_nodes).map(|(s, n)| (unscale(&s, r), n))
}

/// As [`contour_taylor`], returning the scaled coefficients `a_j r^j`.
pub fn contour_taylor_scaled(
    f: impl Fn(Complex64) -> Complex64,
    t: f64,
    r: f64,
    max_order: usize,
    start_nodes: usize,
) -> Option<(Vec<f64>, usize)> {
    let scaled = |n: usize| -> (Vec<f64>, f64) {
        let vals: Vec<Complex64> = (0..n)
            .map(|m| f(t + r * Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64)))
            .collect();
        let fmax = vals.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let c = (0..=max_order)
            .map(|j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, v) in vals.iter().enumerate() {
                    // index reduction keeps the twiddle angle accurate for large j
                    let idx = (j * m) % n;
                    acc += v * Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / n as f64);
                }
                acc.re / n as f64
            })
            .collect();
        (c, fmax)
    };
    let mut n = start_nodes.max(MIN_NODES);
    let (mut prev, _) = scaled(n);
    while n < MAX_NODES {
        n *= 2;
        let (next, fmax) = scaled(n);
        let big = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = next
            .iter()
            .zip(&prev)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prev = next;
        let floor = ROUNDING_FLOOR * n as f64 * f64::EPSILON * fmax;
        if diff <= (AGREEMENT * big).max(floor) || fmax == 0.0 {
            return Some((prev, n));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bump() -> BumpSpec {
        BumpSpec::new(1.6, 0.2, 0.4, 1.0).unwrap()
    }

    #[test]
    fn flat_regions_and_midpoint() {
        let b = bump();
        assert_eq!(b.value(0.2), 1.0);
        assert_eq!(b.value(0.4), 0.0);
        assert_relative_eq!(b.value(0.3), 0.5, epsilon = 1e-15);
        let d = b.derivs(0.2, 5).unwrap();
        assert_eq!(d, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(b.derivs(0.4, 4).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(b.derivs(0.2 + 1e-7, 2), Err(CoreError::OrderTooHigh { .. })));
    }

    #[test]
    fn contour_of_entire_function() {
        let r = 0.5;
        let (c, _) = contour_taylor(|z| z.exp(), 0.3, r, 20, 64).unwrap();
        let mut fact = 1.0;
        for (j, v) in c.iter().enumerate() {
            if j > 0 {
                fact *= j as f64;
            }
            // accuracy is absolute in the scaled coefficients a_j r^j
            let exact = 0.3f64.exp() / fact;
            assert!((v - exact).abs() * r.powi(j as i32) <= 1e-14, "{j}");
            if j <= 6 {
                assert_relative_eq!(*v, exact, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn poles_near_midpoint_shrink_the_contour() {
        let b = bump();
        let td = b.taylor(0.3, 10).unwrap();
        assert!(td.radius < 0.05);
        assert_eq!(b.winding(0.3, td.radius, 64).unwrap().0, 0);
        assert_ne!(b.winding(0.3, 0.05, 64).unwrap().0, 0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = bump();
        let h = 1e-5;
        for i in 0..10 {
            let t = 0.24 + 0.013 * i as f64;
            let d = b.derivs(t, 2).unwrap();
            // five-point central stencils with step h
            let f = |k: f64| b.value(t + k * h);
            let fd1 = (-f(2.0) + 8.0 * f(1.0) - 8.0 * f(-1.0) + f(-2.0)) / (12.0 * h);
            let fd2 = (-f(2.0) + 16.0 * f(1.0) - 30.0 * f(0.0) + 16.0 * f(-1.0) - f(-2.0)) / (12.0 * h * h);
            assert_relative_eq!(d[1], fd1, max_relative = 1e-6);
            // the second difference carries about 1e-16 / h^2 of rounding
            assert!((d[2] - fd2).abs() <= 1e-6 * d[2].abs() + 1e-5, "{t} {} {fd2}", d[2]);
        }
    }

    proptest! {
        #[test]
        fn complement_and_direct_forms_agree(t in 0.28f64..0.32) {
            let b = bump();
            let c = |z| b.eval_c(z, true);
            let d = |z| b.eval_c(z, false);
            let r = b.taylor(t, 6).unwrap().radius;
            let (a1, _) = contour_taylor(c, t, r, 6, 64).unwrap();
            let (a2, _) = contour_taylor(d, t, r, 6, 64).unwrap();
            prop_assert!((1.0 - a1[0] - a2[0]).abs() < 1e-12);
            for j in 1..=6 {
                prop_assert!((a1[j] + a2[j]).abs() <= 1e-8 * a2[j].abs().max(1.0));
            }
        }
    }
}
