//! Boundary-control problem data and admissibility checks.

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientFn, Smooth};
use crate::error::ModelError;
use crate::quadrature::{integrate_singular, DEFAULT_TOL};

/// Coefficients of `alpha * u + beta * (a u_x)` at one end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinPair {
    pub alpha: f64,
    pub beta: f64,
}

impl RobinPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        if alpha == 0.0 && beta == 0.0 {
            return Err(ModelError::Spec("Robin pair (0, 0) is not a boundary condition".into()));
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(ModelError::Spec("Robin pair must be finite".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub const fn dirichlet() -> Self {
        Self { alpha: 1.0, beta: 0.0 }
    }

    pub const fn neumann() -> Self {
        Self { alpha: 0.0, beta: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub a: CoefficientFn,
    pub b: CoefficientFn,
    pub c: CoefficientFn,
    pub rho: CoefficientFn,
    pub bc0: RobinPair,
    pub bc1: RobinPair,
    /// Upper bound for `c / rho`.
    pub k: f64,
    /// Integrability exponent, `f64::INFINITY` allowed.
    pub p: f64,
    pub t_final: f64,
    pub tau: f64,
    pub s: f64,
    pub u0: Smooth,
}

impl ProblemSpec {
    /// Heat equation `u_xx = u_t` with the given ends and initial state.
    pub fn heat(bc0: RobinPair, bc1: RobinPair, u0: Smooth) -> Self {
        Self {
            a: CoefficientFn::constant(1.0),
            b: CoefficientFn::constant(0.0),
            c: CoefficientFn::constant(0.0),
            rho: CoefficientFn::constant(1.0),
            bc0,
            bc1,
            k: 0.0,
            p: f64::INFINITY,
            t_final: 1.0,
            tau: 0.5,
            s: 1.5,
            u0,
        }
    }

    /// Upper end of the admissible Gevrey interval, `2 - 1/p`.
    pub fn s_max(&self) -> f64 {
        2.0 - 1.0 / self.p
    }

    /// Structural invariants (no integrals involved).
    pub fn check_structure(&self) -> Result<(), ModelError> {
        RobinPair::new(self.bc0.alpha, self.bc0.beta)?;
        RobinPair::new(self.bc1.alpha, self.bc1.beta)?;
        if !(self.p > 1.0) {
            return Err(ModelError::Spec(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.s > 1.0 && self.s < self.s_max()) {
            return Err(ModelError::Spec(format!(
                "Gevrey order s = {} outside (1, {})",
                self.s,
                self.s_max()
            )));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(ModelError::Spec(format!("horizon T = {} must be positive", self.t_final)));
        }
        if !(self.tau > 0.0 && self.tau < self.t_final) {
            return Err(ModelError::Spec(format!(
                "switch time tau = {} outside (0, {})",
                self.tau, self.t_final
            )));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(ModelError::Spec(format!("K = {} must be a finite non-negative bound", self.k)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub admissible: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const SAMPLES_PER_SEGMENT: usize = 10_000;

/// Interior sample points of every segment (open midpoint rule layout).
fn interior_samples(f: &CoefficientFn) -> impl Iterator<Item = f64> + '_ {
    f.segments().iter().flat_map(|s| {
        let h = (s.x_hi - s.x_lo) / SAMPLES_PER_SEGMENT as f64;
        (0..SAMPLES_PER_SEGMENT).map(move |i| s.x_lo + h * (i as f64 + 0.5))
    })
}

fn finite_integral(f: &CoefficientFn, tol: f64) -> f64 {
    integrate_singular(f, 0.0, 1.0, tol).unwrap_or(f64::INFINITY)
}

/// Admissibility report: positivity, integrability, the reaction bound and the
/// `L^p` condition on `a^(1-1/p) rho`. Failures are reported, never raised.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    validate_with_tol(spec, DEFAULT_TOL)
}

/// As [`validate`] with the integrability checks run at quadrature tolerance `tol`.
pub fn validate_with_tol(spec: &ProblemSpec, tol: f64) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, pass: bool| {
        checks.push(Check {
            name: name.to_string(),
            value,
            pass,
        })
    };

    let structure = spec.check_structure();
    push("structure", if structure.is_ok() { 0.0 } else { 1.0 }, structure.is_ok());
    let s_ok = spec.s > 1.0 && spec.s < spec.s_max();
    push("gevrey_order", spec.s, s_ok);
    push("switch_time", spec.tau, spec.tau > 0.0 && spec.tau < spec.t_final);

    let min_a = interior_samples(&spec.a).map(|x| spec.a.eval(x)).fold(f64::INFINITY, f64::min);
    push("a_positive", min_a, min_a > 0.0);
    let min_rho = interior_samples(&spec.rho)
        .map(|x| spec.rho.eval(x))
        .fold(f64::INFINITY, f64::min);
    push("rho_positive", min_rho, min_rho > 0.0);

    let inv_a = spec.a.recip();
    let v = finite_integral(&inv_a, tol);
    push("int_inv_a", v, v.is_finite());
    let v = finite_integral(&spec.b.abs().product(&inv_a), tol);
    push("int_abs_b_over_a", v, v.is_finite());
    let v = finite_integral(&spec.c.abs(), tol);
    push("int_abs_c", v, v.is_finite());
    let v = finite_integral(&spec.rho, tol);
    push("int_rho", v, v.is_finite());

    let ratio = spec.c.product(&spec.rho.recip());
    let sup = interior_samples(&ratio)
        .map(|x| ratio.eval(x))
        .fold(f64::NEG_INFINITY, f64::max);
    push("c_over_rho_le_k", sup, sup <= spec.k);

    if spec.p.is_infinite() {
        let ar = spec.a.product(&spec.rho);
        let bounded_ends = ar.endpoint_exponents().iter().all(|e| e.exponent >= 0.0);
        let sup = interior_samples(&ar).map(|x| ar.eval(x).abs()).fold(0.0, f64::max);
        push("a_rho_bounded", sup, bounded_ends && sup.is_finite());
    } else {
        let f = spec.a.powf(spec.p - 1.0).product(&spec.rho.powf(spec.p));
        let v = finite_integral(&f, tol);
        push("int_a_pm1_rho_p", v, v.is_finite());
    }

    let admissible = checks.iter().all(|c| c.pass);
    ValidationReport { checks, admissible }
}

/// Default `K`: `max(0, sampled sup c/rho)`.
pub fn default_k(c: &CoefficientFn, rho: &CoefficientFn) -> f64 {
    let ratio = c.product(&rho.recip());
    interior_samples(&ratio)
        .map(|x| ratio.eval(x))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use approx::assert_relative_eq;

    fn base() -> ProblemSpec {
        let mut s = ProblemSpec::heat(
            RobinPair::neumann(),
            RobinPair::neumann(),
            Smooth::Expr(Expr::parse("cos(pi*x)").unwrap()),
        );
        s.p = 2.0;
        s.s = 1.4;
        s
    }

    #[test]
    fn constant_coefficients_are_admissible() {
        let r = validate(&base());
        assert!(r.admissible, "{r:?}");
        assert_relative_eq!(r.check("int_inv_a").unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn too_degenerate_diffusion_is_rejected() {
        let mut s = base();
        s.a = CoefficientFn::power_law(1.5, Smooth::Expr(Expr::constant(1.0)));
        let r = validate(&s);
        assert!(!r.admissible);
        assert!(!r.check("int_inv_a").unwrap().pass);
    }

    #[test]
    fn square_root_diffusion_is_admissible() {
        let mut s = base();
        s.a = CoefficientFn::power_law(0.5, Smooth::Expr(Expr::constant(1.0)));
        let r = validate(&s);
        assert!(r.admissible, "{r:?}");
        assert_relative_eq!(r.check("int_a_pm1_rho_p").unwrap().value, 2.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(r.check("int_inv_a").unwrap().value, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn reaction_bound_and_gevrey_range() {
        let mut s = base();
        s.c = CoefficientFn::constant(2.0);
        assert!(!validate(&s).check("c_over_rho_le_k").unwrap().pass);
        s.k = 2.0;
        assert!(validate(&s).admissible);
        assert_eq!(default_k(&s.c, &s.rho), 2.0);
        s.s = 1.6;
        assert!(!validate(&s).admissible);
    }

    #[test]
    fn validation_is_deterministic() {
        let mut s = base();
        s.a = CoefficientFn::power_law(0.5, Smooth::Expr(Expr::parse("1 + x").unwrap()));
        assert_eq!(validate(&s), validate(&s));
    }

    #[test]
    fn robin_pair_rejects_zero() {
        assert!(RobinPair::new(0.0, 0.0).is_err());
        assert!(RobinPair::new(0.0, 1.0).is_ok());
    }
}
