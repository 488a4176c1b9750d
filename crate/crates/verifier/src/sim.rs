//! Conservative finite-volume simulation of
//! `(a u_x)_x + b u_x + c u - rho u_t = f` with Robin ends on the flux `a u_x`.
//!
//! Unknowns are cell values. The flux through a face is the difference of the
//! neighbouring values over the resistance `int 1/a` between the cell centres,
//! which is the harmonic average of `a` and stays consistent when `a`
//! degenerates. Boundary faces eliminate the boundary value with the Robin
//! relation and the half-cell resistance.

use flatness_model::{integrate_singular, CoefficientFn, ControlSignal, DistributedControl, ProblemSpec};

use crate::error::{Result, SimError};
use crate::grid::{Scheme, SimGrid};

const QUAD_TOL: f64 = 1e-12;
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

#[derive(Clone, Copy, Debug)]
pub enum Control<'a> {
    None,
    /// `alpha1 u(1,t) + beta1 (a u_x)(1,t) = h(t)`.
    Boundary(&'a ControlSignal),
    /// Source on the right-hand side, homogeneous Robin ends.
    Distributed(&'a DistributedControl),
}

/// Flux through a face, `p u_left + q u_right + r h`.
#[derive(Clone, Copy, Debug, Default)]
struct Face {
    p: f64,
    q: f64,
    r: f64,
}

/// Assembled semi-discrete system `M u' = A u + g(t)`.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub centers: Vec<f64>,
    pub masses: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// Coefficient of `h` in the last cell.
    h_gain: f64,
    faces: Vec<Face>,
    r_left: f64,
    r_right: f64,
    x_nodes: Vec<f64>,
}

fn integral(f: &CoefficientFn, lo: f64, hi: f64) -> Result<f64> {
    Ok(integrate_singular(f, lo, hi, QUAD_TOL)?)
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, grid: &SimGrid) -> Result<Self> {
        let x = &grid.x_nodes;
        let n = grid.cells();
        let centers = grid.centers();
        let inv_a = spec.a.recip();
        let b_over_a = spec.b.product(&inv_a);
        let mut masses = Vec::with_capacity(n);
        let mut react = Vec::with_capacity(n);
        let mut drift = Vec::with_capacity(n);
        // resistance from each face to the adjacent centres
        let mut half_lo = Vec::with_capacity(n);
        let mut half_hi = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi, c) = (x[i], x[i + 1], centers[i]);
            masses.push(integral(&spec.rho, lo, hi)?);
            react.push(if spec.c.is_zero() { 0.0 } else { integral(&spec.c, lo, hi)? });
            drift.push(if spec.b.is_zero() { 0.0 } else { integral(&b_over_a, lo, hi)? });
            half_lo.push(integral(&inv_a, lo, c)?);
            half_hi.push(integral(&inv_a, c, hi)?);
        }
        let (r_left, r_right) = (half_lo[0], half_hi[n - 1]);
        let mut faces = vec![Face::default(); n + 1];
        let d0 = spec.bc0.beta - spec.bc0.alpha * r_left;
        if d0 == 0.0 {
            return Err(SimError::SingularMatrix("left Robin condition degenerate on this grid".into()));
        }
        faces[0].q = -spec.bc0.alpha / d0;
        for j in 1..n {
            let r = half_hi[j - 1] + half_lo[j];
            faces[j].p = -1.0 / r;
            faces[j].q = 1.0 / r;
        }
        let d1 = spec.bc1.alpha * r_right + spec.bc1.beta;
        if d1 == 0.0 {
            return Err(SimError::SingularMatrix("right Robin condition degenerate on this grid".into()));
        }
        faces[n].p = -spec.bc1.alpha / d1;
        faces[n].r = 1.0 / d1;

        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut h_gain = 0.0;
        for i in 0..n {
            let (fl, fr) = (faces[i], faces[i + 1]);
            // the drift b u_x = (b/a)(a u_x) takes the flux of the upwind face
            let (wl, wr) = if drift[i] > 0.0 { (0.0, drift[i]) } else { (drift[i], 0.0) };
            // right face: p couples to u_i, q to u_{i+1}
            diag[i] += (1.0 + wr) * fr.p;
            if i + 1 < n {
                upper[i] += (1.0 + wr) * fr.q;
            }
            // left face: p couples to u_{i-1}, q to u_i
            diag[i] += (wl - 1.0) * fl.q;
            if i > 0 {
                lower[i] += (wl - 1.0) * fl.p;
            }
            diag[i] += react[i];
            if i == n - 1 {
                h_gain = (1.0 + wr) * fr.r;
            }
        }
        Ok(Self {
            centers,
            masses,
            lower,
            diag,
            upper,
            h_gain,
            faces,
            r_left,
            r_right,
            x_nodes: x.clone(),
        })
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    /// `A u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * u[i];
                if i > 0 {
                    v += self.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * u[i + 1];
                }
                v
            })
            .collect()
    }

    /// Cell sources `g(t)`.
    pub fn forcing(&self, control: Control<'_>, t: f64) -> Vec<f64> {
        let n = self.cells();
        let mut g = vec![0.0; n];
        match control {
            Control::None => {}
            Control::Boundary(h) => g[n - 1] = self.h_gain * h.at(t),
            Control::Distributed(f) => {
                for (i, gi) in g.iter_mut().enumerate() {
                    let (lo, hi) = (self.x_nodes[i], self.x_nodes[i + 1]);
                    if hi < f.support.0 || lo > f.support.1 {
                        continue;
                    }
                    let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    let s: f64 = GAUSS3.iter().map(|(z, w)| w * f.at(m + r * z, t)).sum();
                    *gi = -r * s;
                }
            }
        }
        g
    }

    /// State at `[0, centres.., 1]` with the boundary values reconstructed
    /// from the boundary fluxes.
    pub fn nodal(&self, u: &[f64], h: f64) -> Vec<f64> {
        let n = u.len();
        let f0 = self.faces[0].q * u[0];
        let f1 = self.faces[n].p * u[n - 1] + self.faces[n].r * h;
        let mut out = Vec::with_capacity(n + 2);
        out.push(u[0] - self.r_left * f0);
        out.extend_from_slice(u);
        out.push(u[n - 1] + self.r_right * f1);
        out
    }

    pub fn node_positions(&self) -> Vec<f64> {
        let mut x = vec![0.0];
        x.extend_from_slice(&self.centers);
        x.push(1.0);
        x
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.masses).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
    }

    /// Cell averages of `u0` by three-point Gauss.
    pub fn project(&self, u0: impl Fn(f64) -> f64) -> Vec<f64> {
        self.x_nodes
            .windows(2)
            .map(|w| {
                let (m, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                0.5 * GAUSS3.iter().map(|(z, wt)| wt * u0(m + r * z)).sum::<f64>()
            })
            .collect()
    }
}

/// Solves the tridiagonal system in place of `rhs`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return Err(SimError::SingularMatrix("zero pivot in row 0".into()));
    }
    c[0] = upper[0] / piv;
    rhs[0] /= piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(SimError::SingularMatrix(format!("zero pivot in row {i}")));
        }
        c[i] = upper[i] / piv;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SimResult {
    /// `[0, cell centres.., 1]`.
    pub nodes: Vec<f64>,
    pub times: Vec<f64>,
    /// Nodal states at `times`, linear in time between steps.
    pub snapshots: Vec<Vec<f64>>,
    pub final_cells: Vec<f64>,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// `|u(T)|_rho / |u0|_rho`.
    pub final_norm_ratio: f64,
    /// `max |u|` over cells after every step, starting with `u0`.
    pub max_abs: Vec<f64>,
    /// `|u|_rho` after every step.
    pub norms: Vec<f64>,
    pub scheme: Scheme,
    /// Trapezoidal steps oscillated and the run was repeated with implicit Euler.
    pub fallback: bool,
}

impl SimResult {
    /// Linear interpolation of snapshot `k` at `x`.
    pub fn value_at(&self, k: usize, x: f64) -> f64 {
        let s = &self.snapshots[k];
        let j = self.nodes.partition_point(|&p| p <= x).clamp(1, self.nodes.len() - 1);
        let (x0, x1) = (self.nodes[j - 1], self.nodes[j]);
        let w = if x1 > x0 { ((x - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
        (1.0 - w) * s[j - 1] + w * s[j]
    }
}

/// Consecutive strongly anti-aligned step increments counted as oscillation.
const OSCILLATION_RUN: usize = 3;

fn run(
    disc: &Discretization,
    u0: Vec<f64>,
    control: Control<'_>,
    grid: &SimGrid,
    scheme: Scheme,
    snapshot_times: &[f64],
) -> Result<(SimResult, bool)> {
    let n = disc.cells();
    let dt = grid.dt();
    let th = scheme.theta();
    let lhs_l: Vec<f64> = disc.lower.iter().map(|v| -th * dt * v).collect();
    let lhs_u: Vec<f64> = disc.upper.iter().map(|v| -th * dt * v).collect();
    let lhs_d: Vec<f64> = disc.diag.iter().zip(&disc.masses).map(|(v, m)| m - th * dt * v).collect();
    let h_at = |t: f64| match control {
        Control::Boundary(h) => h.at(t),
        _ => 0.0,
    };
    let mut times: Vec<f64> = snapshot_times.to_vec();
    times.sort_by(f64::total_cmp);
    let mut snaps = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut u = u0;
    let initial_norm = disc.norm(&u);
    let mut max_abs = vec![u.iter().fold(0.0f64, |m, v| m.max(v.abs()))];
    let mut norms = vec![initial_norm];
    while next < times.len() && times[next] <= 0.0 {
        snaps.push(disc.nodal(&u, h_at(0.0)));
        next += 1;
    }
    let mut g_old = disc.forcing(control, 0.0);
    let mut prev_inc: Option<Vec<f64>> = None;
    let mut zigzag = 0;
    let mut oscillated = false;
    for step in 0..grid.steps {
        let t0 = step as f64 * dt;
        let t1 = if step + 1 == grid.steps { grid.t_final } else { t0 + dt };
        let g_new = disc.forcing(control, t1);
        let au = disc.apply(&u);
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| disc.masses[i] * u[i] + (1.0 - th) * dt * au[i] + dt * (th * g_new[i] + (1.0 - th) * g_old[i]))
            .collect();
        thomas(&lhs_l, &lhs_d, &lhs_u, &mut rhs)?;
        let u_new = rhs;
        if scheme == Scheme::Trapezoidal {
            let inc: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
            if let Some(p) = &prev_inc {
                let dot: f64 = (0..n).map(|i| disc.masses[i] * inc[i] * p[i]).sum();
                let (ni, np) = (disc.norm(&inc), disc.norm(p));
                let big = ni > 1e-6 * initial_norm.max(disc.norm(&u));
                if big && dot < -0.5 * ni * np {
                    zigzag += 1;
                    if zigzag >= OSCILLATION_RUN {
                        oscillated = true;
                    }
                } else {
                    zigzag = 0;
                }
            }
            prev_inc = Some(inc);
        }
        while next < times.len() && times[next] <= t1 + 1e-12 * grid.t_final {
            let w = ((times[next] - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let a = disc.nodal(&u, h_at(t0));
            let b = disc.nodal(&u_new, h_at(t1));
            snaps.push(a.iter().zip(&b).map(|(x, y)| (1.0 - w) * x + w * y).collect());
            next += 1;
        }
        u = u_new;
        g_old = g_new;
        max_abs.push(u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        norms.push(disc.norm(&u));
    }
    let final_norm = disc.norm(&u);
    let final_norm_ratio = if initial_norm > 0.0 { final_norm / initial_norm } else { final_norm };
    Ok((
        SimResult {
            nodes: disc.node_positions(),
            times: times[..snaps.len()].to_vec(),
            snapshots: snaps,
            final_cells: u,
            initial_norm,
            final_norm,
            final_norm_ratio,
            max_abs,
            norms,
            scheme,
            fallback: false,
        },
        oscillated,
    ))
}

/// Forward simulation of the spec with the given control, recording nodal
/// snapshots at `snapshot_times`.
pub fn simulate_forward(spec: &ProblemSpec, control: Control<'_>, grid: &SimGrid, snapshot_times: &[f64]) -> Result<SimResult> {
    let disc = Discretization::new(spec, grid)?;
    let u0 = disc.project(|x| spec.u0.eval(x));
    let (res, oscillated) = run(&disc, u0.clone(), control, grid, grid.scheme, snapshot_times)?;
    if !oscillated {
        return Ok(res);
    }
    let (mut res, _) = run(&disc, u0, control, grid, Scheme::ImplicitEuler, snapshot_times)?;
    res.fallback = true;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use flatness_model::coeff::Smooth;
    use flatness_model::expr::Expr;
    use flatness_model::RobinPair;

    fn heat(bc0: RobinPair, bc1: RobinPair, u0: &str) -> ProblemSpec {
        let mut s = ProblemSpec::heat(bc0, bc1, Smooth::Expr(Expr::parse(u0).unwrap()));
        s.t_final = 0.1;
        s.tau = 0.05;
        s
    }

    #[test]
    fn constant_state_is_stationary_under_neumann() {
        let spec = heat(RobinPair::neumann(), RobinPair::neumann(), "1");
        let g = SimGrid::uniform(50, 0.1, 100, Scheme::Trapezoidal).unwrap();
        let r = simulate_forward(&spec, Control::None, &g, &[0.1]).unwrap();
        for v in &r.final_cells {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-13);
        }
        assert_relative_eq!(r.final_norm_ratio, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn cosine_decays_at_the_first_eigenvalue() {
        let spec = heat(RobinPair::neumann(), RobinPair::neumann(), "sqrt(2)*cos(pi*x)");
        let g = SimGrid::uniform(400, 0.1, 400, Scheme::Trapezoidal).unwrap();
        let r = simulate_forward(&spec, Control::None, &g, &[]).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(r.final_norm_ratio, (-pi2 * 0.1).exp(), max_relative = 1e-4);
    }

    #[test]
    fn dirichlet_boundary_values_are_reconstructed() {
        let spec = heat(RobinPair::dirichlet(), RobinPair::dirichlet(), "sin(pi*x)");
        let g = SimGrid::uniform(200, 0.1, 200, Scheme::Trapezoidal).unwrap();
        let r = simulate_forward(&spec, Control::None, &g, &[0.05]).unwrap();
        let s = &r.snapshots[0];
        assert!(s[0].abs() < 1e-14 && s.last().unwrap().abs() < 1e-14);
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(r.value_at(0, 0.5), (-pi2 * 0.05).exp(), max_relative = 1e-4);
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = heat(RobinPair::neumann(), RobinPair::dirichlet(), "0");
        let h = ControlSignal::zero(vec![0.0, 0.1]);
        let g = SimGrid::uniform(20, 0.1, 20, Scheme::ImplicitEuler).unwrap();
        let r = simulate_forward(&spec, Control::Boundary(&h), &g, &[0.1]).unwrap();
        assert!(r.final_cells.iter().all(|&v| v == 0.0));
        assert_eq!(r.final_norm_ratio, 0.0);
    }

    #[test]
    fn boundary_control_drives_a_steady_profile() {
        // u(1) = h = 1 with u(0) = 0 tends to u = x
        let mut spec = heat(RobinPair::dirichlet(), RobinPair::dirichlet(), "0");
        spec.t_final = 3.0;
        let h = ControlSignal::new(vec![0.0, 3.0], vec![1.0, 1.0]);
        let g = SimGrid::uniform(100, 3.0, 300, Scheme::ImplicitEuler).unwrap();
        let r = simulate_forward(&spec, Control::Boundary(&h), &g, &[3.0]).unwrap();
        for (x, u) in r.nodes.iter().zip(&r.snapshots[0]) {
            assert!((u - x).abs() < 1e-6, "{x} {u}");
        }
    }

    #[test]
    fn rough_data_triggers_the_euler_fallback() {
        let mut spec = heat(RobinPair::dirichlet(), RobinPair::dirichlet(), "0");
        spec.u0 = Smooth::func(|x| if x < 0.5 { 1.0 } else { 0.0 });
        let g = SimGrid::uniform(400, 0.1, 10, Scheme::Trapezoidal).unwrap();
        let r = simulate_forward(&spec, Control::None, &g, &[]).unwrap();
        assert!(r.fallback);
        assert_eq!(r.scheme, Scheme::ImplicitEuler);
    }
}
