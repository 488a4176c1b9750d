//! Face grids graded toward declared coefficient singularities.

use flatness_model::ProblemSpec;

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    ImplicitEuler,
    Trapezoidal,
}

impl Scheme {
    pub fn theta(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::Trapezoidal => 0.5,
        }
    }
}

pub const DEFAULT_CELLS: usize = 2000;
pub const DEFAULT_STEPS: usize = 4000;
/// Cells shrink like `d^(1/ratio)` toward a singular point.
pub const GRADING_RATIO: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SimGrid {
    /// Cell faces, `0 = x_0 < ... < x_N = 1`.
    pub x_nodes: Vec<f64>,
    pub t_final: f64,
    pub steps: usize,
    pub scheme: Scheme,
}

impl SimGrid {
    pub fn new(x_nodes: Vec<f64>, t_final: f64, steps: usize, scheme: Scheme) -> Result<Self> {
        if x_nodes.len() < 3 {
            return Err(SimError::Grid("at least two cells needed".into()));
        }
        if x_nodes[0] != 0.0 || *x_nodes.last().unwrap() != 1.0 {
            return Err(SimError::Grid("faces must start at 0 and end at 1".into()));
        }
        if !x_nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(SimError::Grid("faces must be strictly increasing".into()));
        }
        if steps == 0 || !(t_final > 0.0) {
            return Err(SimError::Grid("need a positive horizon and step count".into()));
        }
        Ok(Self {
            x_nodes,
            t_final,
            steps,
            scheme,
        })
    }

    pub fn uniform(cells: usize, t_final: f64, steps: usize, scheme: Scheme) -> Result<Self> {
        let x = (0..=cells).map(|j| j as f64 / cells as f64).collect();
        Self::new(x, t_final, steps, scheme)
    }

    /// About `cells` cells with faces at every coefficient breakpoint and
    /// power grading toward every point with a nonzero endpoint exponent.
    pub fn for_spec(spec: &ProblemSpec, cells: usize, steps: usize, scheme: Scheme) -> Result<Self> {
        let coeffs = [&spec.a, &spec.b, &spec.c, &spec.rho];
        let mut breaks = vec![0.0, 1.0];
        let mut singular = Vec::new();
        for f in coeffs {
            breaks.extend(f.breakpoints());
            singular.extend(f.endpoint_exponents().into_iter().map(|e| e.point));
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let is_singular = |x: f64| singular.iter().any(|&s| s == x);
        let mut faces = vec![0.0];
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let m = ((cells as f64 * (hi - lo)).round() as usize).max(4);
            let pts = graded_segment(lo, hi, m, is_singular(lo), is_singular(hi));
            faces.extend_from_slice(&pts[1..]);
        }
        Self::new(faces, spec.t_final, steps, scheme)
    }

    pub fn cells(&self) -> usize {
        self.x_nodes.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        self.x_nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Same scheme with cells split in two and the step halved.
    pub fn refined(&self) -> Self {
        let mut x = Vec::with_capacity(2 * self.x_nodes.len());
        for w in self.x_nodes.windows(2) {
            x.push(w[0]);
            x.push(0.5 * (w[0] + w[1]));
        }
        x.push(1.0);
        Self {
            x_nodes: x,
            t_final: self.t_final,
            steps: 2 * self.steps,
            scheme: self.scheme,
        }
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        Self {
            scheme,
            ..self.clone()
        }
    }
}

fn graded_segment(lo: f64, hi: f64, m: usize, left: bool, right: bool) -> Vec<f64> {
    let q = 1.0 / GRADING_RATIO;
    let len = hi - lo;
    let map = |s: f64| -> f64 {
        match (left, right) {
            (false, false) => s,
            (true, false) => s.powf(q),
            (false, true) => 1.0 - (1.0 - s).powf(q),
            (true, true) => {
                if s <= 0.5 {
                    0.5 * (2.0 * s).powf(q)
                } else {
                    1.0 - 0.5 * (2.0 * (1.0 - s)).powf(q)
                }
            }
        }
    };
    let mut v: Vec<f64> = (0..=m).map(|j| lo + len * map(j as f64 / m as f64)).collect();
    v[0] = lo;
    v[m] = hi;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use flatness_model::coeff::{CoefficientFn, Smooth};
    use flatness_model::expr::Expr;
    use flatness_model::RobinPair;

    #[test]
    fn grading_and_breakpoints() {
        let mut spec = ProblemSpec::heat(RobinPair::neumann(), RobinPair::neumann(), Smooth::Expr(Expr::constant(1.0)));
        spec.a = CoefficientFn::power_law(0.5, Smooth::Expr(Expr::constant(1.0)));
        let g = SimGrid::for_spec(&spec, 100, 10, Scheme::Trapezoidal).unwrap();
        assert_eq!(g.cells(), 100);
        assert!((g.x_nodes[1] - 1e-4).abs() < 1e-15);
        spec.a = CoefficientFn::piecewise_constant(&[0.5], &[1.0, 3.0]).unwrap();
        let g = SimGrid::for_spec(&spec, 100, 10, Scheme::Trapezoidal).unwrap();
        assert!(g.x_nodes.contains(&0.5));
        let r = g.refined();
        assert_eq!(r.cells(), 200);
        assert_eq!(r.steps, 20);
    }

    #[test]
    fn rejects_bad_faces() {
        assert!(SimGrid::new(vec![0.0, 0.6, 0.5, 1.0], 1.0, 1, Scheme::ImplicitEuler).is_err());
        assert!(SimGrid::new(vec![0.0, 1.0], 1.0, 1, Scheme::ImplicitEuler).is_err());
    }
}
