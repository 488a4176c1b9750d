//! Mode dispatch: runs a pipeline, writes its artifacts and the report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use flatness_core::canonical::{reduce, CanonicalProblem};
use flatness_core::extensions::{
    canonical_spec, internal_control, inverse_square_reduce, radial_reduce, radial_trajectory, solve_inverse_square,
    InternalGrid, SingularPotentialSpec,
};
use flatness_core::genfun::GenFunTable;
use flatness_core::spectral::eigenpairs;
use flatness_core::synthesis::{
    evaluate_trajectory, solve_null_control, Report as SynthesisReport, EARLY_TIME_FRACTION,
};
use flatness_core::CoreError;
use flatness_model::{validate_with_tol, ControlSignal, ProblemSpec, Trajectory};
use flatness_verifier::{cross_check, simulate_forward, Control, SimGrid, SimResult};

use crate::config::{parse_config, Mode, Problem, RunConfig};
use crate::demos::demo_config;
use crate::output::{write_control, write_csv, write_distributed, write_trajectory, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Report,
}

struct Failure {
    code: i32,
    stage: String,
    message: String,
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let stage = e.stage().unwrap_or("pipeline").to_string();
        let message = match e {
            CoreError::Stage { source, .. } => source.to_string(),
            e => e.to_string(),
        };
        Failure {
            code: EXIT_NUMERICAL,
            stage,
            message,
        }
    }
}

fn failure(stage: &str, message: impl ToString) -> Failure {
    Failure {
        code: EXIT_NUMERICAL,
        stage: stage.into(),
        message: message.to_string(),
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    failure("output", e)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    report: Report,
}

impl Ctx<'_> {
    fn file(&mut self, name: &str) -> PathBuf {
        self.report.files.push(name.to_string());
        self.out.join(name)
    }

    fn problem(&self) -> Result<&Problem, Failure> {
        self.cfg
            .problem
            .as_ref()
            .ok_or_else(|| Failure {
                code: EXIT_SCHEMA,
                stage: "config".into(),
                message: "no problem given".into(),
            })
    }

    fn absorb(&mut self, r: &SynthesisReport) {
        self.report.matching_error = Some(r.matching_error);
        self.report.trunc_eig = Some(r.trunc_eig);
        self.report.trunc_gen = Some(r.trunc_gen);
        self.report.gevrey_m = r.gevrey_m;
        self.report.gevrey_r = r.gevrey_r;
        self.report.final_norm_series = Some(r.final_norm_series);
        self.report.warnings.extend(r.warnings.iter().map(|w| w.to_string()));
    }

    fn grid(&self, spec: &ProblemSpec) -> Result<SimGrid, Failure> {
        let k = &self.cfg.knobs;
        SimGrid::for_spec(spec, k.sim_cells, k.sim_steps, k.scheme).map_err(|e| failure("simulate", e))
    }

    fn simulate(&mut self, spec: &ProblemSpec, control: Control<'_>, times: &[f64]) -> Result<SimResult, Failure> {
        let grid = self.grid(spec)?;
        let sim = simulate_forward(spec, control, &grid, times).map_err(|e| failure("simulate", e))?;
        self.report.final_norm_ratio = Some(sim.final_norm_ratio);
        self.report.fallback = Some(sim.fallback);
        if sim.fallback {
            self.report
                .warnings
                .push("trapezoidal steps oscillated, rerun with implicit Euler".into());
        }
        Ok(sim)
    }

    fn write_sim(&mut self, sim: &SimResult) -> Result<(), Failure> {
        let path = self.file("sim.csv");
        let rows = sim
            .times
            .iter()
            .zip(&sim.snapshots)
            .flat_map(|(t, row)| sim.nodes.iter().zip(row).map(move |(x, u)| vec![*x, *t, *u]));
        write_csv(&path, &["x", "t", "u"], rows).map_err(io_failure)
    }

    fn check_threshold(&mut self) -> Result<(), Failure> {
        let th = self.cfg.threshold;
        self.report.threshold = Some(th);
        let r = self.report.final_norm_ratio.unwrap_or(f64::NAN);
        if !(r <= th) {
            return Err(Failure {
                code: EXIT_THRESHOLD,
                stage: "verify".into(),
                message: format!("final_norm_ratio {r:e} above threshold {th:e}"),
            });
        }
        Ok(())
    }
}

fn uniform(n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
}

fn canonical_problem(ctx: &Ctx<'_>) -> Result<CanonicalProblem, Failure> {
    let opts = ctx.cfg.knobs.synthesis();
    Ok(match ctx.problem()? {
        Problem::General(spec) => {
            admissible(ctx.cfg, spec)?;
            reduce(spec, &opts.reduction).map_err(|e| e.at_stage("reduce"))?
        }
        Problem::InverseSquare(ps) => inverse_square_reduce(ps, &opts.reduction).map_err(|e| e.at_stage("reduce"))?,
        Problem::Radial(rs) => {
            let ps = radial_reduce(rs).map_err(|e| e.at_stage("reduce"))?;
            inverse_square_reduce(&ps, &opts.reduction).map_err(|e| e.at_stage("reduce"))?
        }
    })
}

fn admissible(cfg: &RunConfig, spec: &ProblemSpec) -> Result<(), Failure> {
    let v = validate_with_tol(spec, cfg.knobs.tol_quad);
    if v.admissible {
        return Ok(());
    }
    let failed: Vec<String> = v.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Err(CoreError::NotAdmissible(failed).at_stage("validate").into())
}

fn run_validate(ctx: &mut Ctx<'_>) -> Result<(), Failure> {
    let (ok, checks) = match ctx.problem()? {
        Problem::General(spec) => {
            let v = validate_with_tol(spec, ctx.cfg.knobs.tol_quad);
            (v.admissible, v.checks)
        }
        Problem::InverseSquare(ps) => (ps.check().is_ok(), Vec::new()),
        Problem::Radial(rs) => (radial_reduce(rs).and_then(|ps| ps.check()).is_ok(), Vec::new()),
    };
    ctx.report.admissible = Some(ok);
    ctx.report.checks = checks;
    if !ok {
        let failed: Vec<String> = ctx.report.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        return Err(CoreError::NotAdmissible(failed).at_stage("validate").into());
    }
    Ok(())
}

fn run_eigs(ctx: &mut Ctx<'_>) -> Result<(), Failure> {
    let cp = canonical_problem(ctx)?;
    let opts = ctx.cfg.knobs.synthesis();
    let pairs = eigenpairs(&cp, opts.n_eig, opts.spectral).map_err(|e| e.at_stage("spectral"))?;
    let path = ctx.file("eigen.csv");
    write_csv(
        &path,
        &["n", "lambda", "zeta"],
        pairs.iter().map(|p| vec![p.n as f64, p.lambda, p.zeta]),
    )
    .map_err(io_failure)
}

fn run_genfun(ctx: &mut Ctx<'_>) -> Result<(), Failure> {
    let cp = canonical_problem(ctx)?;
    let table = GenFunTable::build(&cp, ctx.cfg.knobs.n_gen);
    if let Ok(f) = table.fit_bound(cp.p) {
        ctx.report.warnings.extend(
            (f.max_factor() > 10.0).then(|| format!("generating-function envelope off by {:.3e}", f.max_factor())),
        );
    }
    let path = ctx.file("genfun.csv");
    write_csv(
        &path,
        &["i", "gi1", "gip1"],
        table.traces.iter().enumerate().map(|(i, (g, gp))| vec![i as f64, *g, *gp]),
    )
    .map_err(io_failure)
}

/// Boundary pipeline: the control and trajectory to write, and the
/// simulation spec, control and reference trajectory for the check.
struct Boundary {
    control: ControlSignal,
    trajectory: Trajectory,
    sim_spec: ProblemSpec,
    sim_control: ControlSignal,
    reference: Trajectory,
}

fn synthesize_boundary(ctx: &mut Ctx<'_>) -> Result<Boundary, Failure> {
    let opts = ctx.cfg.knobs.synthesis();
    let uniform_x = uniform(opts.x_points);
    let potential = |ctx: &mut Ctx<'_>, ps: &SingularPotentialSpec| -> Result<_, Failure> {
        let sol = solve_inverse_square(ps, &opts)?;
        ctx.absorb(&sol.solution.report);
        // the canonical variables are authoritative for these problems
        let reference = evaluate_trajectory(&sol.solution.canonical, &uniform_x, &sol.solution.trajectory.t_grid)?;
        let sim_spec = canonical_spec(ps)?;
        Ok((sol, reference, sim_spec))
    };
    Ok(match ctx.problem()?.clone() {
        Problem::General(spec) => {
            admissible(ctx.cfg, &spec)?;
            let sol = solve_null_control(&spec, &opts)?;
            ctx.absorb(&sol.report);
            Boundary {
                control: sol.control.clone(),
                trajectory: sol.trajectory.clone(),
                sim_spec: spec,
                sim_control: sol.control,
                reference: sol.trajectory,
            }
        }
        Problem::InverseSquare(ps) => {
            let (sol, reference, sim_spec) = potential(ctx, &ps)?;
            Boundary {
                control: sol.control.clone(),
                trajectory: sol.solution.trajectory.clone(),
                sim_spec,
                sim_control: sol.solution.canonical_control.signal.clone(),
                reference,
            }
        }
        Problem::Radial(rs) => {
            let ps = radial_reduce(&rs).map_err(|e| e.at_stage("reduce"))?;
            let (sol, reference, sim_spec) = potential(ctx, &ps)?;
            let trajectory = radial_trajectory(&rs, &sol, &uniform_x, &sol.solution.trajectory.t_grid)?;
            Boundary {
                control: sol.control.clone(),
                trajectory,
                sim_spec,
                sim_control: sol.solution.canonical_control.signal.clone(),
                reference,
            }
        }
    })
}

fn run_boundary(ctx: &mut Ctx<'_>, mode: Mode) -> Result<(), Failure> {
    let b = synthesize_boundary(ctx)?;
    let p = ctx.file("h.csv");
    write_control(&p, &b.control).map_err(io_failure)?;
    let p = ctx.file("trajectory.csv");
    write_trajectory(&p, &b.trajectory).map_err(io_failure)?;
    if mode == Mode::Synthesize {
        return Ok(());
    }
    let sim = ctx.simulate(&b.sim_spec, Control::Boundary(&b.sim_control), &b.reference.t_grid)?;
    ctx.write_sim(&sim)?;
    if mode == Mode::Verify {
        let t_min = 2.0 * EARLY_TIME_FRACTION * b.sim_spec.t_final;
        let d = cross_check(&b.reference, &sim, t_min);
        ctx.report.max_dev = Some(d.max_dev);
        ctx.report.l2_dev = Some(d.l2_dev);
        ctx.check_threshold()?;
    }
    Ok(())
}

fn run_internal(ctx: &mut Ctx<'_>) -> Result<(), Failure> {
    let spec = ctx.cfg.internal_spec().ok_or_else(|| Failure {
        code: EXIT_SCHEMA,
        stage: "config".into(),
        message: "internal mode needs a general problem and an [internal] section".into(),
    })?;
    admissible(ctx.cfg, &spec.base)?;
    let k = ctx.cfg.knobs;
    let grid = InternalGrid {
        x_points: k.internal_x_points,
        t_steps: k.internal_t_steps,
    };
    let sol = internal_control(&spec, &k.synthesis(), grid)?;
    let m1 = sol.aux[0].matching_error()?;
    let m2 = sol.aux[1].matching_error()?;
    ctx.report.matching_error = Some(m1.max(m2));
    ctx.report.final_norm_series = Some(sol.final_norm_series);
    ctx.report.support = Some([sol.control.support.0, sol.control.support.1]);
    ctx.report.max_outside_omega = Some(sol.max_outside);
    let p = ctx.file("f.csv");
    write_distributed(&p, &sol.control).map_err(io_failure)?;
    let p = ctx.file("trajectory.csv");
    write_trajectory(&p, &sol.trajectory).map_err(io_failure)?;
    let sim = ctx.simulate(&spec.base, Control::Distributed(&sol.control), &sol.trajectory.t_grid)?;
    ctx.write_sim(&sim)?;
    let d = cross_check(&sol.trajectory, &sim, 2.0 * EARLY_TIME_FRACTION * spec.base.t_final);
    ctx.report.max_dev = Some(d.max_dev);
    ctx.report.l2_dev = Some(d.l2_dev);
    if sol.max_outside != 0.0 {
        return Err(Failure {
            code: EXIT_THRESHOLD,
            stage: "verify".into(),
            message: format!("source reaches {:e} outside omega", sol.max_outside),
        });
    }
    ctx.check_threshold()
}

fn dispatch(ctx: &mut Ctx<'_>, mode: Mode) -> Result<(), Failure> {
    match mode {
        Mode::Validate => run_validate(ctx),
        Mode::Eigs => run_eigs(ctx),
        Mode::Genfun => run_genfun(ctx),
        Mode::Synthesize | Mode::Simulate | Mode::Verify => run_boundary(ctx, mode),
        Mode::Internal => run_internal(ctx),
        Mode::Demo => unreachable!("demo configs name a concrete mode"),
    }
}

/// Runs a parsed configuration, writing artifacts and `report.json` to `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Outcome {
    if cfg.mode == Mode::Demo {
        let name = cfg.demo.clone().unwrap_or_default();
        let parsed = demo_config(&name).ok_or_else(|| format!("unknown demo {name:?}")).and_then(|text| {
            parse_config(text).map_err(|e| e.to_string())
        });
        return match parsed {
            Ok(demo) => {
                let mut o = run(&demo, out);
                o.report.demo = Some(name);
                let _ = o.report.write(out);
                o
            }
            Err(message) => schema_failure(out, "demo", message, cfg.demo.clone()),
        };
    }
    let start = Instant::now();
    if let Err(e) = std::fs::create_dir_all(out) {
        return Outcome {
            code: EXIT_NUMERICAL,
            report: Report {
                status: "error".into(),
                stage: Some("output".into()),
                error: Some(e.to_string()),
                mode: cfg.mode.name().into(),
                ..Report::default()
            },
        };
    }
    let mut ctx = Ctx {
        cfg,
        out,
        report: Report {
            mode: cfg.mode.name().into(),
            ..Report::default()
        },
    };
    let code = match dispatch(&mut ctx, cfg.mode) {
        Ok(()) => {
            ctx.report.status = "ok".into();
            EXIT_OK
        }
        Err(f) => {
            ctx.report.status = match f.code {
                EXIT_THRESHOLD => "threshold",
                EXIT_SCHEMA => "schema",
                _ => "error",
            }
            .into();
            ctx.report.stage = Some(f.stage);
            ctx.report.error = Some(f.message);
            f.code
        }
    };
    ctx.report.runtime_s = start.elapsed().as_secs_f64();
    let mut report = ctx.report;
    if let Err(e) = report.write(out) {
        report.status = "error".into();
        report.stage = Some("output".into());
        report.error = Some(e.to_string());
        return Outcome {
            code: EXIT_NUMERICAL,
            report,
        };
    }
    Outcome { code, report }
}

/// Report for a configuration that did not parse.
pub fn schema_failure(out: &Path, mode: &str, message: String, demo: Option<String>) -> Outcome {
    let report = Report {
        status: "schema".into(),
        stage: Some("config".into()),
        error: Some(message),
        mode: mode.into(),
        demo,
        ..Report::default()
    };
    let _ = report.write(out);
    Outcome {
        code: EXIT_SCHEMA,
        report,
    }
}
