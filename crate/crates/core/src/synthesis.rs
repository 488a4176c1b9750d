//! Control and trajectory assembly.
//!
//! For `t <= tau` the canonical state is the decaying eigen-series
//! `sum c_n e^{-lambda_n t} e_n(y)`; after `tau` it is the generating-function
//! series `sum y^(i)(t) g_i(y)` driven by the control
//! `h_hat(t) = sum y^(i)(t) (alpha1_hat g_i(1) + beta1_hat g_i'(1))`.
//! All sums over `i` are formed from the Taylor coefficients `y^(i)/i!` against
//! `i! g_i`, which keeps both factors in range for large `i`.

use std::fmt;

use rayon::prelude::*;

use flatness_model::{ControlSignal, ProblemSpec, Regime, Trajectory};

use crate::bump::BumpSpec;
use crate::canonical::{pull_back, reduce, CanonicalProblem, ReductionOptions};
use crate::error::{CoreError, Result};
use crate::fit::{ln_factorial, GevreyFit};
use crate::flat::{project_initial, FlatOutput, Kahan, ScaledTaylor};
use crate::genfun::{GenFunTable, DEFAULT_N_GEN};
use crate::spectral::{eigenpairs, EigenPair, SpectralOptions, DEFAULT_N_EIG};

/// Relative size of the last series term above which truncation is reported.
pub const TRUNCATION_TOL: f64 = 1e-8;

/// Fraction of `T` below which the eigen-series is flagged as not yet smoothed.
pub const EARLY_TIME_FRACTION: f64 = 1e-4;

/// Largest generating-function order; `i!` must stay finite.
pub const MAX_N_GEN: usize = 170;

#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    /// Last control term relative to `sup |h_hat|`.
    Truncation { t: f64, ratio: f64 },
    /// Partial sums of a Taylor-type eigenfunction expansion still grow.
    Divergence { n: usize, lambda: f64 },
    /// Eigen-series evaluated at times before `1e-4 T`.
    EarlyTime { samples: usize },
    /// Fitted Gevrey constants unavailable.
    Fit(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Truncation { t, ratio } => {
                write!(f, "truncation: last control term is {ratio:.3e} of sup|h| at t = {t}")
            }
            Warning::Divergence { n, lambda } => {
                write!(f, "divergence: expansion of e_{n} (lambda = {lambda:.6e}) not converged")
            }
            Warning::EarlyTime { samples } => {
                write!(f, "early time: {samples} eigen-series samples before 1e-4 T")
            }
            Warning::Fit(m) => write!(f, "gevrey fit: {m}"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SynthesisOptions {
    pub n_eig: usize,
    pub n_gen: usize,
    pub bump_m: f64,
    /// Uniform steps of the control grid before refinement near `tau`.
    pub control_steps: usize,
    /// Uniform steps of the trajectory grid before refinement near `tau`.
    pub trajectory_steps: usize,
    pub x_points: usize,
    pub gevrey_orders: usize,
    pub gevrey_samples: usize,
    pub reduction: ReductionOptions,
    pub spectral: SpectralOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            n_eig: DEFAULT_N_EIG,
            n_gen: DEFAULT_N_GEN,
            bump_m: 1.0,
            control_steps: 4000,
            trajectory_steps: 80,
            x_points: 101,
            gevrey_orders: 20,
            gevrey_samples: 41,
            reduction: ReductionOptions::default(),
            spectral: SpectralOptions::default(),
        }
    }
}

/// Uniform grid on `[0, T]` with step `T / n`, refined by 4 on
/// `[tau - w, tau + w]`, `w = 0.05 (T - tau)`; contains `tau` exactly.
pub fn time_grid(t_final: f64, tau: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let dt = t_final / n as f64;
    let w = 0.05 * (t_final - tau);
    let (lo, hi) = ((tau - w).max(0.0), (tau + w).min(t_final));
    let mut ts: Vec<f64> = (0..=n).map(|j| j as f64 * dt).filter(|&t| t < lo || t > hi).collect();
    let m = ((hi - lo) / (0.25 * dt)).ceil().max(1.0) as usize;
    ts.extend((0..=m).map(|j| lo + (hi - lo) * j as f64 / m as f64));
    ts.push(tau);
    ts.push(t_final);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * t_final);
    ts
}

/// Everything needed to evaluate control and state in canonical variables.
#[derive(Clone, Debug)]
pub struct CanonicalSolution {
    pub problem: CanonicalProblem,
    pub pairs: Vec<EigenPair>,
    pub coeffs: Vec<f64>,
    pub table: GenFunTable,
    pub flat: FlatOutput,
    /// `ln i!`
    ln_fact: Vec<f64>,
    /// `ln |i! (alpha1_hat g_i(1) + beta1_hat g_i'(1))|` and its sign.
    ln_traces: Vec<f64>,
    trace_signs: Vec<f64>,
}

/// `(ln |v|, sign v)` with `ln 0 = -inf`.
fn log_split(v: f64) -> (f64, f64) {
    if v == 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (v.abs().ln(), v.signum())
    }
}

impl CanonicalSolution {
    /// Eigensolve, project, build the generating functions and the flat output.
    pub fn new(problem: CanonicalProblem, bump: BumpSpec, opts: &SynthesisOptions) -> Result<Self> {
        if opts.n_gen > MAX_N_GEN {
            return Err(CoreError::DomainError(format!("N_gen = {} above {MAX_N_GEN}", opts.n_gen)).at_stage("genfun"));
        }
        let pairs = eigenpairs(&problem, opts.n_eig, opts.spectral).map_err(|e| e.at_stage("spectral"))?;
        let coeffs = project_initial(&problem, &pairs);
        let table = GenFunTable::build(&problem, opts.n_gen);
        let ln_fact: Vec<f64> = (0..=opts.n_gen).map(ln_factorial).collect();
        let (ln_traces, trace_signs) = table
            .boundary_traces_log(problem.bc1_hat)
            .iter()
            .zip(&ln_fact)
            .map(|(&(l, s), lf)| (l + lf, s))
            .unzip();
        let flat = FlatOutput::new(&coeffs, &pairs, bump);
        Ok(Self {
            problem,
            pairs,
            coeffs,
            table,
            flat,
            ln_fact,
            ln_traces,
            trace_signs,
        })
    }

    pub fn tau(&self) -> f64 {
        self.flat.bump.tau
    }

    pub fn t_final(&self) -> f64 {
        self.flat.bump.t_final
    }

    pub fn n_gen(&self) -> usize {
        self.table.n_gen()
    }

    /// Scaled Taylor coefficients of the flat output on `[tau, T]`.
    pub fn flat_taylor(&self, t: f64) -> Result<ScaledTaylor> {
        self.flat.y_taylor_scaled_clamped(t, self.n_gen()).map_err(|e| e.at_stage("flat"))
    }

    /// `(h_hat(t), last term)`.
    pub fn control_value(&self, t: f64) -> Result<(f64, f64)> {
        if t <= self.tau() {
            return Ok((0.0, 0.0));
        }
        let a = self.flat_taylor(t)?;
        Ok(a.dot_log(&self.ln_traces, &self.trace_signs))
    }

    /// `sum_i y^(i) S_i q_i` for normalized generating-function values `q_i = f(i)`.
    fn series_with(&self, a: &ScaledTaylor, f: impl Fn(usize) -> f64) -> f64 {
        let (ln_q, sign_q): (Vec<f64>, Vec<f64>) = (0..=self.n_gen())
            .map(|i| {
                let (l, s) = log_split(f(i));
                (l + self.ln_fact[i] + self.table.ln_scale[i], s)
            })
            .unzip();
        a.dot_log(&ln_q, &sign_q).0
    }

    /// Eigen-series `(u_hat, u_hat_y)` at `(y, t)`.
    pub fn eigen_series(&self, y: f64, t: f64) -> (f64, f64) {
        let (mut u, mut uy) = (Kahan::default(), Kahan::default());
        for (p, c) in self.pairs.iter().zip(&self.coeffs) {
            let d = c * (-p.lambda * t).exp();
            u.add(d * p.e.eval(y));
            uy.add(d * p.e_prime.eval(y));
        }
        (u.value(), uy.value())
    }

    /// Generating-function series `(u_hat, u_hat_y)` at `y` from the scaled
    /// Taylor coefficients of the flat output.
    pub fn genfun_series(&self, y: f64, a: &ScaledTaylor) -> (f64, f64) {
        if a.coeffs.iter().all(|&v| v == 0.0) {
            return (0.0, 0.0);
        }
        let u = self.series_with(a, |i| self.table.unit[i].0.eval(y));
        let uy = self.series_with(a, |i| self.table.unit[i].1.eval(y));
        (u, uy)
    }

    /// `(u_hat, u_hat_y)` on the points `ys` at time `t`, with the regime used.
    pub fn profile(&self, ys: &[f64], t: f64) -> Result<(Vec<(f64, f64)>, Regime)> {
        if t <= self.tau() {
            Ok((ys.iter().map(|&y| self.eigen_series(y, t)).collect(), Regime::Eigen))
        } else {
            let a = self.flat_taylor(t)?;
            Ok((ys.iter().map(|&y| self.genfun_series(y, &a)).collect(), Regime::GenFun))
        }
    }

    fn eigen_gl(&self, t: f64) -> Vec<Vec<f64>> {
        let mesh = &self.problem.mesh;
        (0..mesh.len())
            .map(|c| {
                (0..flatness_model::gauss::NGL)
                    .map(|k| {
                        let mut acc = Kahan::default();
                        for (p, coef) in self.pairs.iter().zip(&self.coeffs) {
                            acc.add(coef * (-p.lambda * t).exp() * p.e.gl(c, k));
                        }
                        acc.value()
                    })
                    .collect()
            })
            .collect()
    }

    fn genfun_gl(&self, a: &ScaledTaylor) -> Vec<Vec<f64>> {
        let mesh = &self.problem.mesh;
        (0..mesh.len())
            .map(|c| {
                (0..flatness_model::gauss::NGL)
                    .map(|k| self.series_with(a, |i| self.table.unit[i].0.gl(c, k)))
                    .collect()
            })
            .collect()
    }

    fn weighted_norm(&self, v: &[Vec<f64>]) -> f64 {
        self.problem.weighted_integral(|c, k| v[c][k] * v[c][k]).max(0.0).sqrt()
    }

    /// Relative `L^2_rho_hat` gap between the two regime formulas at `tau`.
    pub fn matching_error(&self) -> Result<f64> {
        let tau = self.tau();
        let ue = self.eigen_gl(tau);
        let a = self.flat.y_taylor_scaled(tau, self.n_gen()).map_err(|e| e.at_stage("flat"))?;
        let ug = self.genfun_gl(&a);
        let diff: Vec<Vec<f64>> = ue
            .iter()
            .zip(&ug)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
            .collect();
        let base = self.weighted_norm(&ue);
        let d = self.weighted_norm(&diff);
        Ok(if base == 0.0 { d } else { d / base })
    }

    /// Relative `L^2_rho_hat` norm of the genfun series at `T` against `u0_hat`.
    pub fn final_norm_series(&self) -> Result<f64> {
        let a = self.flat_taylor(self.t_final())?;
        let u_t = self.genfun_gl(&a);
        let u0 = self.eigen_gl(0.0);
        let base = self.weighted_norm(&u0);
        let d = self.weighted_norm(&u_t);
        Ok(if base == 0.0 { d } else { d / base })
    }

    /// Last retained eigen-mode relative to the series in `L^2_rho_hat` at `t`.
    pub fn eigen_truncation(&self, t: f64) -> f64 {
        let amps: Vec<f64> = self
            .pairs
            .iter()
            .zip(&self.coeffs)
            .map(|(p, c)| c * (-p.lambda * t).exp())
            .collect();
        let total = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        match amps.last() {
            Some(l) if total > 0.0 => l.abs() / total,
            _ => 0.0,
        }
    }
}

/// Control samples with the magnitude of the last series term at each time.
#[derive(Clone, Debug)]
pub struct ControlSynthesis {
    pub signal: ControlSignal,
    pub last_term: Vec<f64>,
    pub warnings: Vec<Warning>,
}

impl ControlSynthesis {
    /// Largest last-term magnitude relative to `sup |h|`.
    pub fn truncation_ratio(&self) -> f64 {
        let sup = self.signal.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup == 0.0 {
            return 0.0;
        }
        self.last_term.iter().fold(0.0f64, |m, v| m.max(v / sup))
    }
}

/// Canonical control `h_hat` on `t_grid`.
pub fn synthesize_control(sol: &CanonicalSolution, t_grid: &[f64]) -> Result<ControlSynthesis> {
    let vals: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| sol.control_value(t))
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("synthesis"))?;
    let signal = ControlSignal::new(t_grid.to_vec(), vals.iter().map(|v| v.0).collect());
    let last_term: Vec<f64> = vals.iter().map(|v| v.1).collect();
    let mut out = ControlSynthesis {
        signal,
        last_term,
        warnings: Vec::new(),
    };
    let sup = out.signal.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup > 0.0 {
        let worst = out
            .last_term
            .iter()
            .zip(t_grid)
            .map(|(l, t)| (l / sup, *t))
            .fold((0.0, 0.0), |m, v| if v.0 > m.0 { v } else { m });
        if worst.0 > TRUNCATION_TOL {
            out.warnings.push(Warning::Truncation { t: worst.1, ratio: worst.0 });
        }
    }
    Ok(out)
}

/// Canonical state on `ys x t_grid`.
pub fn evaluate_trajectory(sol: &CanonicalSolution, ys: &[f64], t_grid: &[f64]) -> Result<Trajectory> {
    let rows: Vec<(Vec<(f64, f64)>, Regime)> = t_grid
        .par_iter()
        .map(|&t| sol.profile(ys, t))
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("synthesis"))?;
    Ok(Trajectory {
        x_grid: ys.to_vec(),
        t_grid: t_grid.to_vec(),
        values: rows.iter().map(|(r, _)| r.iter().map(|v| v.0).collect()).collect(),
        regimes: rows.iter().map(|(_, g)| *g).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct EigenExpansion {
    /// `zeta_n sum_i (-lambda_n)^i g_i` at the stored mesh points.
    pub values: flatness_model::MeshFn,
    pub sup_deviation: f64,
    /// Sup norm of the last retained term.
    pub last_term: f64,
    pub warning: Option<Warning>,
}

/// Taylor-type reconstruction of `e_n` from the generating functions.
pub fn expand_eigenfunction(pair: &EigenPair, table: &GenFunTable) -> EigenExpansion {
    let mesh = table.g[0].mesh().clone();
    let n = table.n_gen();
    let mut sums = vec![[Kahan::default(); flatness_model::gauss::NPTS]; mesh.len()];
    let mut term_sups = Vec::with_capacity(n + 1);
    let mut coef = pair.zeta;
    for i in 0..=n {
        let g = &table.g[i];
        let mut sup = 0.0f64;
        for (c, row) in sums.iter_mut().enumerate() {
            for (k, acc) in row.iter_mut().enumerate() {
                let v = coef * g.values()[c][k];
                sup = sup.max(v.abs());
                acc.add(v);
            }
        }
        term_sups.push(sup);
        coef *= -pair.lambda;
    }
    let vals = sums.iter().map(|row| row.map(|k| k.value())).collect();
    let values = flatness_model::MeshFn::new(mesh, vals);
    let sup_deviation = values
        .values()
        .iter()
        .zip(pair.e.values())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    let last_term = *term_sups.last().unwrap_or(&0.0);
    let grows = n >= 1 && last_term > term_sups[n - 1];
    let total = values.sup_abs();
    let warning = (grows || last_term > TRUNCATION_TOL * total.max(f64::MIN_POSITIVE)).then_some(Warning::Divergence {
        n: pair.n,
        lambda: pair.lambda,
    });
    EigenExpansion {
        values,
        sup_deviation,
        last_term,
        warning,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub matching_error: f64,
    pub trunc_eig: f64,
    pub trunc_gen: f64,
    pub gevrey_m: Option<f64>,
    pub gevrey_r: Option<f64>,
    pub gevrey_fit: Option<GevreyFit>,
    pub genfun_fit: Option<GevreyFit>,
    pub final_norm_series: f64,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug)]
pub struct NullControlSolution {
    pub canonical: CanonicalSolution,
    /// `h_hat` on the control grid.
    pub canonical_control: ControlSynthesis,
    /// `h = e^{Kt} h_hat`.
    pub control: ControlSignal,
    /// `u(x, t)` in original variables on a uniform `x` grid.
    pub trajectory: Trajectory,
    pub report: Report,
}

/// Report diagnostics for a canonical solution and its control.
pub fn diagnostics(sol: &CanonicalSolution, control: &ControlSynthesis, t_grid: &[f64], opts: &SynthesisOptions) -> Result<Report> {
    let mut warnings = control.warnings.clone();
    let eps_min = EARLY_TIME_FRACTION * sol.t_final();
    let early = t_grid.iter().filter(|&&t| t < eps_min).count();
    if early > 0 {
        warnings.push(Warning::EarlyTime { samples: early });
    }
    let gevrey_fit = match sol.flat.gevrey_estimate(opts.gevrey_orders, opts.gevrey_samples) {
        Ok(f) => Some(f),
        Err(CoreError::FitDegenerate(m)) => {
            warnings.push(Warning::Fit(m));
            None
        }
        Err(e) => return Err(e.at_stage("flat")),
    };
    let genfun_fit = sol.table.fit_bound(sol.problem.p).ok();
    Ok(Report {
        matching_error: sol.matching_error()?,
        trunc_eig: sol.eigen_truncation(eps_min),
        trunc_gen: control.truncation_ratio(),
        gevrey_m: gevrey_fit.as_ref().map(|f| f.c),
        gevrey_r: gevrey_fit.as_ref().map(|f| f.r),
        gevrey_fit,
        genfun_fit,
        final_norm_series: sol.final_norm_series()?,
        warnings,
    })
}

/// Pipeline on a canonical problem, pulled back with its own transform.
pub fn solve_canonical(problem: CanonicalProblem, bump: BumpSpec, opts: &SynthesisOptions) -> Result<NullControlSolution> {
    let sol = CanonicalSolution::new(problem, bump, opts)?;
    let tr = sol.problem.transform.clone();
    let k = tr.k();
    let t_ctrl = time_grid(sol.t_final(), sol.tau(), opts.control_steps);
    let ctrl = synthesize_control(&sol, &t_ctrl)?;
    let control = ControlSignal::new(
        t_ctrl.clone(),
        t_ctrl
            .iter()
            .zip(&ctrl.signal.values)
            .map(|(t, h)| (k * t).exp() * h)
            .collect(),
    );
    let t_traj = time_grid(sol.t_final(), sol.tau(), opts.trajectory_steps);
    let nx = opts.x_points.max(2);
    let xs: Vec<f64> = (0..nx).map(|j| j as f64 / (nx - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| tr.y_of_x(x)).collect();
    let canon = evaluate_trajectory(&sol, &ys, &t_traj).map_err(|e| e.at_stage("pull-back"))?;
    let values = t_traj
        .iter()
        .zip(&canon.values)
        .map(|(&t, row)| {
            xs.iter()
                .zip(row)
                .map(|(&x, &u)| pull_back(tr.as_ref(), x, t, u, 0.0).0)
                .collect()
        })
        .collect();
    let trajectory = Trajectory {
        x_grid: xs,
        t_grid: t_traj.clone(),
        values,
        regimes: canon.regimes,
    };
    let report = diagnostics(&sol, &ctrl, &t_traj, opts)?;
    Ok(NullControlSolution {
        canonical: sol,
        canonical_control: ctrl,
        control,
        trajectory,
        report,
    })
}

pub fn bump_for(spec: &ProblemSpec, m: f64) -> Result<BumpSpec> {
    BumpSpec::new(spec.s, spec.tau, spec.t_final, m).map_err(|e| e.at_stage("flat"))
}

/// Full boundary-control pipeline for an admissible spec.
pub fn solve_null_control(spec: &ProblemSpec, opts: &SynthesisOptions) -> Result<NullControlSolution> {
    let problem = reduce(spec, &opts.reduction).map_err(|e| e.at_stage("reduce"))?;
    let bump = bump_for(spec, opts.bump_m)?;
    solve_canonical(problem, bump, opts)
}
