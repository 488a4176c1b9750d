//! Inverse-square potentials, radial heat equations in dimensions 2 and 3, and
//! internal (distributed) control.

use std::sync::Arc;

use flatness_model::coeff::Smooth;
use flatness_model::mesh::{needs_grading, Grading, Mesh, Side};
use flatness_model::{CoefficientFn, ControlSignal, DistributedControl, ProblemSpec, RobinPair, Trajectory};
use rayon::prelude::*;

use crate::bump::BumpSpec;
use crate::canonical::{reduce, CanonicalProblem, ReductionOptions, SpaceTransform, StateFn};
use crate::error::{CoreError, Result};
use crate::synthesis::{
    bump_for, solve_canonical, time_grid, CanonicalSolution, NullControlSolution, SynthesisOptions,
};

/// `u_xx + mu / x^2 u = u_t`, Dirichlet at `x = 0`, Robin control at `x = 1`.
#[derive(Clone, Debug)]
pub struct SingularPotentialSpec {
    pub mu: f64,
    pub bc1: RobinPair,
    pub t_final: f64,
    pub tau: f64,
    pub s: f64,
    pub u0: Smooth,
}

pub const CRITICAL_MU: f64 = 0.25;

impl SingularPotentialSpec {
    /// Roots of `r^2 - r + mu = 0`, smaller first.
    pub fn roots(&self) -> (f64, f64) {
        let d = (1.0 - 4.0 * self.mu).max(0.0).sqrt();
        ((1.0 - d) / 2.0, (1.0 + d) / 2.0)
    }

    pub fn is_critical(&self) -> bool {
        self.mu == CRITICAL_MU
    }

    pub fn check(&self) -> Result<()> {
        if !(self.mu >= 0.0) {
            return Err(CoreError::DomainError(format!("mu = {} must be non-negative", self.mu)));
        }
        if self.mu > CRITICAL_MU {
            return Err(CoreError::DomainError(format!(
                "mu = {} above 1/4, the flatness construction does not apply",
                self.mu
            )));
        }
        RobinPair::new(self.bc1.alpha, self.bc1.beta)?;
        let mut s = ProblemSpec::heat(RobinPair::dirichlet(), self.bc1, self.u0.clone());
        s.t_final = self.t_final;
        s.tau = self.tau;
        s.s = self.s;
        s.check_structure()?;
        Ok(())
    }

    /// Pair used by the synthesis at `y = 1`: the requested one per `(alpha1 +
    /// beta1 r1, beta1 / L)` below the critical value, Dirichlet at it.
    pub fn synthesis_bc1(&self) -> RobinPair {
        if self.is_critical() {
            return RobinPair::dirichlet();
        }
        let t = InverseSquareTransform::new(self.mu);
        RobinPair {
            alpha: self.bc1.alpha + self.bc1.beta * t.flux_v(1.0),
            beta: self.bc1.beta / t.l,
        }
    }
}

/// Explicit change of variables for the inverse-square potential.
///
/// Below the critical value `v = x^r1`, `y = x^(1 - 2 r1)`. At `mu = 1/4`
/// `v = sqrt(x) (1 - ln x)`, `y = 1 / (1 - ln x)`, both with `v(1) = 1`.
#[derive(Clone, Copy, Debug)]
pub struct InverseSquareTransform {
    pub r1: f64,
    pub critical: bool,
    pub l: f64,
}

impl InverseSquareTransform {
    pub fn new(mu: f64) -> Self {
        let d = (1.0 - 4.0 * mu).max(0.0).sqrt();
        let r1 = (1.0 - d) / 2.0;
        if mu >= CRITICAL_MU {
            Self {
                r1: 0.5,
                critical: true,
                l: 1.0,
            }
        } else {
            Self {
                r1,
                critical: false,
                l: 1.0 / (1.0 - 2.0 * r1),
            }
        }
    }

    /// `rho_hat(y) = L^2 v(x(y))^4`.
    pub fn rho_hat(&self, y: f64) -> f64 {
        if self.critical {
            if y <= 0.0 {
                return 0.0;
            }
            (2.0 - 2.0 / y).exp() / y.powi(4)
        } else {
            self.l * self.l * y.powf(self.weight_exponent())
        }
    }

    /// `kappa` in `rho_hat ~ y^kappa` below the critical value.
    pub fn weight_exponent(&self) -> f64 {
        4.0 * self.r1 / (1.0 - 2.0 * self.r1)
    }
}

impl SpaceTransform for InverseSquareTransform {
    fn l(&self) -> f64 {
        self.l
    }
    fn k(&self) -> f64 {
        0.0
    }
    fn y_of_x(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.critical {
            1.0 / (1.0 - x.ln())
        } else {
            x.powf(1.0 - 2.0 * self.r1)
        }
    }
    fn x_of_y(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if self.critical {
            (1.0 - 1.0 / y).exp()
        } else {
            y.powf(1.0 / (1.0 - 2.0 * self.r1))
        }
    }
    fn v(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if self.r1 == 0.0 { 1.0 } else { 0.0 };
        }
        if self.critical {
            x.sqrt() * (1.0 - x.ln())
        } else {
            x.powf(self.r1)
        }
    }
    fn flux_v(&self, x: f64) -> f64 {
        if self.critical {
            -(1.0 + x.ln()) / (2.0 * x.sqrt())
        } else if self.r1 == 0.0 {
            0.0
        } else {
            self.r1 * x.powf(self.r1 - 1.0)
        }
    }
    fn gauge(&self, _x: f64) -> f64 {
        0.0
    }
    fn a(&self, _x: f64) -> f64 {
        1.0
    }
}

/// Canonical problem of an inverse-square potential: Dirichlet at `y = 0`,
/// `rho_hat = L^2 v^4`, `u0_hat = u0 / v`.
pub fn inverse_square_reduce(spec: &SingularPotentialSpec, opts: &ReductionOptions) -> Result<CanonicalProblem> {
    spec.check()?;
    let tr = InverseSquareTransform::new(spec.mu);
    let mut gradings = Vec::new();
    if !tr.critical && needs_grading(tr.weight_exponent()) {
        gradings.push(Grading {
            point: 0.0,
            side: Side::Right,
            exponent: tr.weight_exponent(),
        });
    }
    let mesh = Arc::new(Mesh::graded(0.0, 1.0, &[], &gradings, opts.mesh));
    let u0 = spec.u0.clone();
    let u0_hat: StateFn = Arc::new(move |y| {
        let x = tr.x_of_y(y);
        let v = tr.v(x);
        if v == 0.0 {
            0.0
        } else {
            u0.eval(x) / v
        }
    });
    Ok(CanonicalProblem::from_weight(
        move |_, _, y| tr.rho_hat(y),
        mesh,
        gradings,
        RobinPair::dirichlet(),
        spec.synthesis_bc1(),
        u0_hat,
        f64::INFINITY,
        Arc::new(tr),
    ))
}

/// The canonical system `u_yy = rho_hat u_t` as a spec for forward simulation.
pub fn canonical_spec(spec: &SingularPotentialSpec) -> Result<ProblemSpec> {
    spec.check()?;
    let tr = InverseSquareTransform::new(spec.mu);
    let u0 = spec.u0.clone();
    let mut s = ProblemSpec::heat(
        RobinPair::dirichlet(),
        spec.synthesis_bc1(),
        Smooth::func(move |y| {
            let x = tr.x_of_y(y);
            let v = tr.v(x);
            if v == 0.0 {
                0.0
            } else {
                u0.eval(x) / v
            }
        }),
    );
    s.rho = if tr.critical {
        CoefficientFn::from_fn(move |y| tr.rho_hat(y))
    } else {
        CoefficientFn::power_law(tr.weight_exponent(), Smooth::Expr(flatness_model::Expr::constant(tr.l * tr.l)))
    };
    s.t_final = spec.t_final;
    s.tau = spec.tau;
    s.s = spec.s;
    Ok(s)
}

/// `(int u0_hat^2 rho_hat dy, L int u0^2 dx)`, equal in exact arithmetic.
pub fn weight_identity(problem: &CanonicalProblem, spec: &SingularPotentialSpec) -> (f64, f64) {
    let lhs = problem.weighted_integral(|c, k| {
        let y = problem.gl_points(c)[k];
        let u = (problem.u0_hat)(y);
        u * u
    });
    let l = problem.transform.l();
    let u0 = spec.u0.clone();
    let sq = CoefficientFn::from_fn(move |x| u0.eval(x).powi(2));
    let rhs = l * flatness_model::integrate_singular(&sq, 0.0, 1.0, 1e-13).unwrap_or(f64::NAN);
    (lhs, rhs)
}

#[derive(Clone, Debug)]
pub struct InverseSquareSolution {
    pub spec: SingularPotentialSpec,
    /// Synthesis on the canonical problem, `control` there is the canonical one.
    pub solution: NullControlSolution,
    /// Control for the requested Robin condition at `x = 1`.
    pub control: ControlSignal,
}

impl InverseSquareSolution {
    /// `x^r u_x(x, t)` from the series; `t` in `(tau, T]`.
    pub fn weighted_flux(&self, x: f64, t: f64, r: f64) -> Result<f64> {
        let tr = InverseSquareTransform::new(self.spec.mu);
        let y = tr.y_of_x(x);
        let (prof, _) = self.solution.canonical.profile(&[y], t)?;
        let (u, uy) = prof[0];
        let v = tr.v(x);
        let ux = tr.flux_v(x) * u + uy / (tr.l * v);
        Ok(x.powf(r) * ux)
    }
}

/// Null control for an inverse-square potential. At the critical value the
/// synthesis runs with a Dirichlet control and the requested condition is
/// evaluated on the resulting trajectory, `h = alpha1 u(1, t) + beta1 u_x(1, t)`.
pub fn solve_inverse_square(spec: &SingularPotentialSpec, opts: &SynthesisOptions) -> Result<InverseSquareSolution> {
    let problem = inverse_square_reduce(spec, &opts.reduction).map_err(|e| e.at_stage("reduce"))?;
    let bump = BumpSpec::new(spec.s, spec.tau, spec.t_final, opts.bump_m).map_err(|e| e.at_stage("flat"))?;
    let solution = solve_canonical(problem, bump, opts)?;
    let control = if spec.is_critical() {
        let tr = InverseSquareTransform::new(spec.mu);
        let sol = &solution.canonical;
        let times = solution.control.times.clone();
        let values = times
            .par_iter()
            .map(|&t| {
                if t <= sol.tau() {
                    return Ok(0.0);
                }
                let (p, _) = sol.profile(&[1.0], t)?;
                let (u, uy) = p[0];
                // v(1) = 1
                Ok(spec.bc1.alpha * u + spec.bc1.beta * (tr.flux_v(1.0) * u + uy / tr.l))
            })
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.at_stage("pull-back"))?;
        ControlSignal::new(times, values)
    } else {
        solution.control.clone()
    };
    Ok(InverseSquareSolution {
        spec: spec.clone(),
        solution,
        control,
    })
}

/// Radial heat equation `u_rr + (N-1)/r u_r = u_t` in the unit ball.
#[derive(Clone, Debug)]
pub struct RadialSpec {
    pub dimension: usize,
    pub bc1: RobinPair,
    pub t_final: f64,
    pub tau: f64,
    pub s: f64,
    pub u0: Smooth,
}

impl RadialSpec {
    fn half(&self) -> f64 {
        (self.dimension as f64 - 1.0) / 2.0
    }

    /// `u = u_tilde / r^((N-1)/2)`.
    pub fn pull_back(&self, r: f64, u_tilde: f64) -> f64 {
        u_tilde / r.powf(self.half())
    }
}

/// Radial state `u(r, t)` from a solution of the reduced problem. At the centre
/// `u(0, t) = u_hat_y(0, t)` for both dimensions, since `L = 1`.
pub fn radial_trajectory(spec: &RadialSpec, sol: &InverseSquareSolution, rs: &[f64], ts: &[f64]) -> Result<Trajectory> {
    let tr = InverseSquareTransform::new(sol.spec.mu);
    let ys: Vec<f64> = rs.iter().map(|&r| tr.y_of_x(r)).collect();
    let rows = ts
        .par_iter()
        .map(|&t| {
            let (p, regime) = sol.solution.canonical.profile(&ys, t)?;
            let row = rs
                .iter()
                .zip(&p)
                .map(|(&r, &(u, uy))| if r <= 0.0 { uy } else { spec.pull_back(r, tr.v(r) * u) })
                .collect::<Vec<f64>>();
            Ok((row, regime))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("pull-back"))?;
    let (values, regimes) = rows.into_iter().unzip();
    Ok(Trajectory {
        x_grid: rs.to_vec(),
        t_grid: ts.to_vec(),
        values,
        regimes,
    })
}

/// `u = u_tilde r^-((N-1)/2)` turns the radial equation into an inverse-square
/// potential with `mu = (N-1)(3-N)/4` and right pair `(alpha1 - (N-1)/2 beta1, beta1)`.
pub fn radial_reduce(spec: &RadialSpec) -> Result<SingularPotentialSpec> {
    let n = spec.dimension;
    if !(n == 2 || n == 3) {
        return Err(CoreError::DomainError(format!("radial dimension {n} not in {{2, 3}}")));
    }
    let h = spec.half();
    let u0 = spec.u0.clone();
    Ok(SingularPotentialSpec {
        mu: (n as f64 - 1.0) * (3.0 - n as f64) / 4.0,
        bc1: RobinPair {
            alpha: spec.bc1.alpha - h * spec.bc1.beta,
            beta: spec.bc1.beta,
        },
        t_final: spec.t_final,
        tau: spec.tau,
        s: spec.s,
        u0: Smooth::func(move |r| r.powf(h) * u0.eval(r)),
    })
}

/// Distributed control supported in `omega`, homogeneous Robin data at both ends.
#[derive(Clone, Debug)]
pub struct InternalControlSpec {
    pub base: ProblemSpec,
    pub omega: (f64, f64),
    /// `(l1', l2')`, transition interval of the cutoff in `x`.
    pub inner: (f64, f64),
}

impl InternalControlSpec {
    pub fn check(&self) -> Result<()> {
        let (l1, l2) = self.omega;
        let (m1, m2) = self.inner;
        if !(0.0 < l1 && l1 < m1 && m1 < m2 && m2 < l2 && l2 < 1.0) {
            return Err(CoreError::DomainError(format!(
                "need 0 < l1 < l1' < l2' < l2 < 1, got omega = ({l1}, {l2}), inner = ({m1}, {m2})"
            )));
        }
        self.base.check_structure()?;
        Ok(())
    }
}

/// Sampling of the distributed control and trajectory.
#[derive(Clone, Copy, Debug)]
pub struct InternalGrid {
    pub x_points: usize,
    pub t_steps: usize,
}

impl Default for InternalGrid {
    fn default() -> Self {
        Self {
            x_points: 401,
            t_steps: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InternalControlSolution {
    pub control: DistributedControl,
    /// `u(x, t)` in original variables.
    pub trajectory: Trajectory,
    /// `(l1_hat', l2_hat')`
    pub support_y: (f64, f64),
    /// Right-control problem and the mirrored left-control problem.
    pub aux: [CanonicalSolution; 2],
    /// Largest relative terminal norm of the two auxiliary series.
    pub final_norm_series: f64,
    pub max_outside: f64,
}

/// Cutoff `phi` with `phi = 1` below `lo`, `0` above `hi`; returns `(phi, phi', phi'')`.
pub fn cutoff(bump: &BumpSpec, y: f64) -> Result<(f64, f64, f64)> {
    if y <= bump.tau {
        return Ok((1.0, 0.0, 0.0));
    }
    if y >= bump.t_final {
        return Ok((0.0, 0.0, 0.0));
    }
    let td = bump.taylor_clamped(y, 2)?;
    Ok((td.coeffs[0], td.coeffs[1], 2.0 * td.coeffs[2]))
}

/// Blended state `phi u1 + (1 - phi) u2` and source `phi'' (u1 - u2) + 2 phi' (u1_y - u2_y)`.
pub fn blend(phi: (f64, f64, f64), p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    let (f, f1, f2) = phi;
    let u = f * p1.0 + (1.0 - f) * p2.0;
    let src = f2 * (p1.0 - p2.0) + 2.0 * f1 * (p1.1 - p2.1);
    (u, src)
}

/// Two boundary-controlled auxiliary problems in canonical variables, blended
/// by a spatial cutoff into a distributed control supported in `[l1', l2']`.
pub fn internal_control(
    spec: &InternalControlSpec,
    opts: &SynthesisOptions,
    grid: InternalGrid,
) -> Result<InternalControlSolution> {
    spec.check()?;
    let cp = reduce(&spec.base, &opts.reduction).map_err(|e| e.at_stage("reduce"))?;
    let bump = bump_for(&spec.base, opts.bump_m)?;
    let tr = cp.transform.clone();
    let right = cp.clone().with_bc1(RobinPair::neumann());
    // left control in y is right control in 1 - y
    let left = cp.mirrored().with_bc1(RobinPair::neumann());
    let (s1, s2) = rayon::join(
        || CanonicalSolution::new(right, bump, opts).map_err(|e| e.at_stage("aux-1")),
        || CanonicalSolution::new(left, bump, opts).map_err(|e| e.at_stage("aux-2")),
    );
    let (s1, s2) = (s1?, s2?);
    let final_norm_series = s1
        .final_norm_series()
        .map_err(|e| e.at_stage("aux-1"))?
        .max(s2.final_norm_series().map_err(|e| e.at_stage("aux-2"))?);

    let (m1, m2) = spec.inner;
    let support_y = (tr.y_of_x(m1), tr.y_of_x(m2));
    let phi = BumpSpec::new(spec.base.s, support_y.0, support_y.1, 1.0).map_err(|e| e.at_stage("cutoff"))?;

    let nx = grid.x_points.max(2);
    let mut xs: Vec<f64> = (0..nx).map(|j| j as f64 / (nx - 1) as f64).collect();
    xs.extend([m1, m2]);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let ys: Vec<f64> = xs.iter().map(|&x| tr.y_of_x(x)).collect();
    let zs: Vec<f64> = ys.iter().map(|y| 1.0 - y).collect();
    let cut = ys
        .iter()
        .zip(&xs)
        .map(|(&y, &x)| if x <= m1 { Ok((1.0, 0.0, 0.0)) } else if x >= m2 { Ok((0.0, 0.0, 0.0)) } else { cutoff(&phi, y) })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("cutoff"))?;
    // L^2 a v^3 e^{2B}
    let weight: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let v = tr.v(x);
            tr.l() * tr.l() * tr.a(x) * v * v * v * (2.0 * tr.gauge(x)).exp()
        })
        .collect();

    let ts = time_grid(spec.base.t_final, spec.base.tau, grid.t_steps);
    let k = tr.k();
    let rows = ts
        .par_iter()
        .map(|&t| {
            let (p1, r1) = s1.profile(&ys, t).map_err(|e| e.at_stage("aux-1"))?;
            let (p2, _) = s2.profile(&zs, t).map_err(|e| e.at_stage("aux-2"))?;
            let ekt = (k * t).exp();
            let mut f_row = Vec::with_capacity(xs.len());
            let mut u_row = Vec::with_capacity(xs.len());
            for j in 0..xs.len() {
                let q2 = (p2[j].0, -p2[j].1);
                let (u, src) = blend(cut[j], p1[j], q2);
                let x = xs[j];
                f_row.push(if x <= m1 || x >= m2 { 0.0 } else { ekt * src / weight[j] });
                u_row.push(ekt * tr.v(x) * u);
            }
            Ok((f_row, u_row, r1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut f_vals = Vec::with_capacity(ts.len());
    let mut u_vals = Vec::with_capacity(ts.len());
    let mut regimes = Vec::with_capacity(ts.len());
    for (f, u, r) in rows {
        f_vals.push(f);
        u_vals.push(u);
        regimes.push(r);
    }
    let control = DistributedControl {
        x_grid: xs.clone(),
        t_grid: ts.clone(),
        values: f_vals,
        support: (m1, m2),
    };
    let (l1, l2) = spec.omega;
    let max_outside = control
        .values
        .iter()
        .flat_map(|row| row.iter().zip(&xs).filter(|(_, &x)| x <= l1 || x >= l2).map(|(v, _)| v.abs()))
        .fold(0.0, f64::max);
    Ok(InternalControlSolution {
        control,
        trajectory: Trajectory {
            x_grid: xs,
            t_grid: ts,
            values: u_vals,
            regimes,
        },
        support_y,
        aux: [s1, s2],
        final_norm_series,
        max_outside,
    })
}
