//! Generating functions: `g_0` linear with the left Robin data, then
//! `g_i'' = rho_hat g_{i-1}` with zero Cauchy data at `y = 0`.

use flatness_model::mesh::MeshFn;
use flatness_model::RobinPair;

use crate::canonical::CanonicalProblem;
use crate::error::Result;
use crate::fit::{fit_envelope_log, GevreyFit};

pub const DEFAULT_N_GEN: usize = 30;

#[derive(Clone, Debug)]
pub struct GenFunTable {
    /// `g_i`; underflows to zero for large `i`, see `unit`.
    pub g: Vec<MeshFn>,
    pub g_prime: Vec<MeshFn>,
    /// `(g_i(1), g_i'(1))`
    pub traces: Vec<(f64, f64)>,
    /// `(g_i, g_i') / S_i` with `sup |g_i / S_i| = 1` (or `g_i = 0`).
    pub unit: Vec<(MeshFn, MeshFn)>,
    /// `ln S_i`.
    pub ln_scale: Vec<f64>,
}

/// `g_0(y) = (beta - alpha y) / (alpha^2 + beta^2)`; returns `(g_0, g_0')`.
pub fn g0_coeffs(bc0: RobinPair) -> (f64, f64) {
    let d = bc0.alpha * bc0.alpha + bc0.beta * bc0.beta;
    (bc0.beta / d, -bc0.alpha / d)
}

impl GenFunTable {
    pub fn build(problem: &CanonicalProblem, n_gen: usize) -> Self {
        let mesh = problem.mesh.clone();
        let (b, slope) = g0_coeffs(problem.bc0_hat);
        let g0 = MeshFn::from_fn(mesh.clone(), |y| b + slope * y);
        let g0p = MeshFn::constant(mesh.clone(), slope);
        // the recursion runs on normalized functions so that high orders keep
        // their relative precision
        let mut unit = Vec::with_capacity(n_gen + 1);
        let mut ln_scale = Vec::with_capacity(n_gen + 1);
        let normalize = |g: MeshFn, gp: MeshFn, ln_prev: f64| {
            let s = g.sup_abs();
            if s == 0.0 || !s.is_finite() {
                return ((g, gp), ln_prev);
            }
            ((g.map(|v| v / s), gp.map(|v| v / s)), ln_prev + s.ln())
        };
        let (u0, l0) = normalize(g0, g0p, 0.0);
        unit.push(u0);
        ln_scale.push(l0);
        for i in 1..=n_gen {
            let prev = &unit[i - 1].0;
            let gp = MeshFn::cumulative(mesh.clone(), 0.0, |c, k| problem.rho_hat.gl(c, k) * prev.gl(c, k));
            let gi = MeshFn::cumulative(mesh.clone(), 0.0, |c, k| gp.gl(c, k));
            let (u, l) = normalize(gi, gp, ln_scale[i - 1]);
            unit.push(u);
            ln_scale.push(l);
        }
        let g: Vec<MeshFn> = unit.iter().zip(&ln_scale).map(|((u, _), l)| u.map(|v| v * l.exp())).collect();
        let g_prime: Vec<MeshFn> = unit.iter().zip(&ln_scale).map(|((_, u), l)| u.map(|v| v * l.exp())).collect();
        let traces = g.iter().zip(&g_prime).map(|(a, b)| (a.last(), b.last())).collect();
        Self {
            g,
            g_prime,
            traces,
            unit,
            ln_scale,
        }
    }

    pub fn n_gen(&self) -> usize {
        self.g.len() - 1
    }

    /// `alpha1 g_i(1) + beta1 g_i'(1)` for every `i`.
    pub fn boundary_traces(&self, bc1: RobinPair) -> Vec<f64> {
        self.traces
            .iter()
            .map(|(g, gp)| bc1.alpha * g + bc1.beta * gp)
            .collect()
    }

    /// `(ln |alpha1 g_i(1) + beta1 g_i'(1)|, sign)`, valid past underflow.
    pub fn boundary_traces_log(&self, bc1: RobinPair) -> Vec<(f64, f64)> {
        self.unit
            .iter()
            .zip(&self.ln_scale)
            .map(|((g, gp), l)| {
                let v = bc1.alpha * g.last() + bc1.beta * gp.last();
                if v == 0.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else {
                    (v.abs().ln() + l, v.signum())
                }
            })
            .collect()
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.g.iter().map(MeshFn::sup_abs).collect()
    }

    /// Envelope fit `sup|g_i| (i!)^(2 - 1/p) ~ C R^-i` over `i >= 1`.
    pub fn fit_bound(&self, p: f64) -> Result<GevreyFit> {
        // sup|g_i| = S_i unless g_i vanishes
        let vals: Vec<(usize, f64)> = (1..=self.n_gen())
            .filter(|&i| self.unit[i].0.sup_abs() > 0.0)
            .map(|i| (i, self.ln_scale[i]))
            .collect();
        // the envelope bounds sup|g_i| by C R^-i / (i!)^(2-1/p)
        fit_envelope_log(&vals, -(2.0 - 1.0 / p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{reduce, ReductionOptions};
    use approx::assert_relative_eq;
    use flatness_model::coeff::{CoefficientFn, Smooth};
    use flatness_model::expr::Expr;
    use flatness_model::ProblemSpec;
    use proptest::prelude::*;

    fn problem(bc0: RobinPair, rho: CoefficientFn) -> CanonicalProblem {
        let mut s = ProblemSpec::heat(bc0, RobinPair::neumann(), Smooth::Expr(Expr::constant(1.0)));
        s.rho = rho;
        reduce(&s, &ReductionOptions::default()).unwrap()
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn g0_cases() {
        assert_eq!(g0_coeffs(RobinPair::neumann()), (1.0, 0.0));
        assert_eq!(g0_coeffs(RobinPair::dirichlet()), (0.0, -1.0));
        assert_eq!(g0_coeffs(RobinPair::new(1.0, 1.0).unwrap()), (0.5, -0.5));
    }

    #[test]
    fn neumann_table_is_even_powers() {
        let t = GenFunTable::build(&problem(RobinPair::neumann(), CoefficientFn::constant(1.0)), 15);
        for i in 0..=15 {
            let exact = 1.0 / factorial(2 * i);
            assert_relative_eq!(t.traces[i].0, exact, max_relative = 1e-12);
            if i >= 1 {
                assert_relative_eq!(t.traces[i].1, 1.0 / factorial(2 * i - 1), max_relative = 1e-12);
                assert_eq!(t.g[i].first(), 0.0);
                assert_eq!(t.g_prime[i].first(), 0.0);
            }
            let y: f64 = 0.37;
            assert_relative_eq!(t.g[i].eval(y), y.powi(2 * i as i32) / factorial(2 * i), max_relative = 1e-8);
        }
        let tr = t.boundary_traces(RobinPair::neumann());
        assert_eq!(tr[0], 0.0);
        let tr = t.boundary_traces(RobinPair::dirichlet());
        assert_relative_eq!(tr[3], 1.0 / 720.0, max_relative = 1e-12);
    }

    #[test]
    fn dirichlet_start_gives_odd_powers() {
        let t = GenFunTable::build(&problem(RobinPair::dirichlet(), CoefficientFn::constant(1.0)), 2);
        for y in [0.2, 0.5, 1.0] {
            assert_relative_eq!(t.g[1].eval(y), -y * y * y / 6.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn first_derivative_is_weight_primitive() {
        let rho = CoefficientFn::from_expr("1 + x^2").unwrap();
        let t = GenFunTable::build(&problem(RobinPair::neumann(), rho), 1);
        for y in [0.1, 0.45, 0.8, 1.0] {
            assert_relative_eq!(t.g_prime[1].eval(y), y + y * y * y / 3.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn bound_fit_for_constant_weight() {
        let t = GenFunTable::build(&problem(RobinPair::neumann(), CoefficientFn::constant(1.0)), 25);
        let f = t.fit_bound(f64::INFINITY).unwrap();
        assert!(f.max_factor() < 10.0, "{f:?}");
        // (i!)^2 / (2i)! decays like 4^-i up to a sub-geometric factor
        assert!((f.r - 4.0).abs() < 0.5, "{}", f.r);
    }

    proptest! {
        #[test]
        fn recursion_matches_direct_quadrature(c1 in 0.0f64..2.0, ys in proptest::collection::vec(0.0f64..1.0, 10)) {
            let rho = CoefficientFn::from_expr(&format!("1 + {c1}*sin(3*x)")).unwrap();
            let cp = problem(RobinPair::neumann(), rho.clone());
            let t = GenFunTable::build(&cp, 2);
            // closed form of g_1 for this weight, then composite Simpson for g_2'
            let g1 = |s: f64| s * s / 2.0 + c1 * (s / 3.0 - (3.0 * s).sin() / 9.0);
            for y in ys {
                let n = 2000;
                let h = y / n as f64;
                let f = |s: f64| rho.eval(s) * g1(s);
                let mut acc = f(0.0) + f(y);
                for j in 1..n {
                    acc += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
                }
                let g2p = acc * h / 3.0;
                prop_assert!((t.g_prime[2].eval(y) - g2p).abs() <= 1e-9 * g2p.abs().max(1e-12));
            }
        }
    }
}
