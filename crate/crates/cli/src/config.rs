//! Run configuration: a sectioned key-value (TOML) file.
//!
//! ```toml
//! [run]
//! mode = "verify"            # validate eigs genfun synthesize simulate verify internal demo
//! demo = "neumann-constant"  # demo mode only
//!
//! [problem]
//! kind = "general"           # general | inverse-square | radial
//! a = "1"                    # expression in x, or an array of segment tables
//! rho = "1"
//! bc0 = [0.0, 1.0]           # (alpha, beta)
//! bc1 = [0.0, 1.0]
//! T = 0.4
//! s = 1.6
//! u0 = "cos(pi*x)"
//!
//! [knobs]
//! n_gen = 60
//! ```
//!
//! A segment table is `{ x_lo, x_hi, left_exp, right_exp, smooth }`, the
//! coefficient on it being `(x - x_lo)^left_exp (x_hi - x)^right_exp smooth(x)`.

use std::fmt;
use std::path::PathBuf;

use flatness_core::canonical::ReductionOptions;
use flatness_core::extensions::{InternalControlSpec, RadialSpec, SingularPotentialSpec};
use flatness_core::spectral::SpectralOptions;
use flatness_core::synthesis::SynthesisOptions;
use flatness_model::problem::default_k;
use flatness_model::{CoefficientFn, Expr, ProblemSpec, RobinPair, SegmentRecord, Smooth};
use flatness_verifier::{Scheme, DEFAULT_CELLS, DEFAULT_STEPS};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Validate,
    Eigs,
    Genfun,
    Synthesize,
    Simulate,
    Verify,
    Internal,
    Demo,
}

impl Mode {
    pub const ALL: [(&'static str, Mode); 8] = [
        ("validate", Mode::Validate),
        ("eigs", Mode::Eigs),
        ("genfun", Mode::Genfun),
        ("synthesize", Mode::Synthesize),
        ("simulate", Mode::Simulate),
        ("verify", Mode::Verify),
        ("internal", Mode::Internal),
        ("demo", Mode::Demo),
    ];

    pub fn parse(s: &str) -> Option<Mode> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, m)| *m)
    }

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, m)| *m == self).map(|(n, _)| *n).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaError {
    /// 1-based line of the offending key, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemaErrors(pub Vec<SchemaError>);

impl fmt::Display for SchemaErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaErrors {}

/// Numerical knobs with their defaults.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knobs {
    pub n_eig: usize,
    pub n_gen: usize,
    pub bump_m: f64,
    pub tol_quad: f64,
    pub tol_ode: f64,
    pub mesh_cells: usize,
    pub control_steps: usize,
    pub trajectory_steps: usize,
    pub x_points: usize,
    pub sim_cells: usize,
    pub sim_steps: usize,
    pub scheme: Scheme,
    pub internal_x_points: usize,
    pub internal_t_steps: usize,
}

impl Default for Knobs {
    fn default() -> Self {
        let s = SynthesisOptions::default();
        Self {
            n_eig: s.n_eig,
            n_gen: s.n_gen,
            bump_m: s.bump_m,
            tol_quad: flatness_model::DEFAULT_TOL,
            tol_ode: s.spectral.ode.atol,
            mesh_cells: s.reduction.mesh.base_cells,
            control_steps: s.control_steps,
            trajectory_steps: s.trajectory_steps,
            x_points: s.x_points,
            sim_cells: DEFAULT_CELLS,
            sim_steps: DEFAULT_STEPS,
            scheme: Scheme::Trapezoidal,
            internal_x_points: 401,
            internal_t_steps: 1000,
        }
    }
}

impl Knobs {
    pub fn synthesis(&self) -> SynthesisOptions {
        let mut reduction = ReductionOptions::default();
        reduction.mesh.base_cells = self.mesh_cells;
        let mut spectral = SpectralOptions::default();
        spectral.ode.atol = self.tol_ode;
        SynthesisOptions {
            n_eig: self.n_eig,
            n_gen: self.n_gen,
            bump_m: self.bump_m,
            control_steps: self.control_steps,
            trajectory_steps: self.trajectory_steps,
            x_points: self.x_points,
            reduction,
            spectral,
            ..SynthesisOptions::default()
        }
    }
}

#[derive(Clone, Debug)]
pub enum Problem {
    General(ProblemSpec),
    InverseSquare(SingularPotentialSpec),
    Radial(RadialSpec),
}

impl Problem {
    pub fn t_final(&self) -> f64 {
        match self {
            Problem::General(s) => s.t_final,
            Problem::InverseSquare(s) => s.t_final,
            Problem::Radial(s) => s.t_final,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub demo: Option<String>,
    pub out: Option<PathBuf>,
    pub problem: Option<Problem>,
    /// `(omega, inner)` of the internal-control mode.
    pub internal: Option<((f64, f64), (f64, f64))>,
    pub knobs: Knobs,
    /// Largest accepted `final_norm_ratio` in verify and internal modes.
    pub threshold: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 1e-2;

impl RunConfig {
    pub fn internal_spec(&self) -> Option<InternalControlSpec> {
        match (&self.problem, self.internal) {
            (Some(Problem::General(base)), Some((omega, inner))) => Some(InternalControlSpec {
                base: base.clone(),
                omega,
                inner,
            }),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    problem: Option<RawProblem>,
    #[serde(default)]
    knobs: RawKnobs,
    internal: Option<RawInternal>,
    verify: Option<RawVerify>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<String>,
    demo: Option<String>,
    out: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCoeff {
    Expr(String),
    Number(f64),
    Segments(Vec<SegmentRecord>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: Option<String>,
    a: Option<RawCoeff>,
    b: Option<RawCoeff>,
    c: Option<RawCoeff>,
    rho: Option<RawCoeff>,
    k: Option<f64>,
    p: Option<f64>,
    bc0: Option<Vec<f64>>,
    bc1: Option<Vec<f64>>,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    tau: Option<f64>,
    s: Option<f64>,
    u0: Option<String>,
    mu: Option<f64>,
    dimension: Option<i64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawKnobs {
    n_eig: Option<i64>,
    n_gen: Option<i64>,
    bump_m: Option<f64>,
    tol_quad: Option<f64>,
    tol_ode: Option<f64>,
    mesh_cells: Option<i64>,
    control_steps: Option<i64>,
    trajectory_steps: Option<i64>,
    x_points: Option<i64>,
    sim_cells: Option<i64>,
    sim_steps: Option<i64>,
    scheme: Option<String>,
    internal_x_points: Option<i64>,
    internal_t_steps: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInternal {
    omega: Vec<f64>,
    inner: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    threshold: f64,
}

/// 1-based line of `key = ...` inside `[section]`.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Collector<'a> {
    text: &'a str,
    errors: Vec<SchemaError>,
}

impl Collector<'_> {
    fn err(&mut self, section: &str, key: &str, message: impl Into<String>) {
        let line = locate(self.text, section, key).or_else(|| locate(self.text, section, ""));
        self.errors.push(SchemaError {
            line,
            message: message.into(),
        });
    }

    fn positive(&mut self, key: &str, v: Option<i64>, default: usize) -> usize {
        match v {
            None => default,
            Some(n) if n > 0 => n as usize,
            Some(n) => {
                self.err("knobs", key, format!("{key} = {n} must be positive"));
                default
            }
        }
    }

    fn positive_f(&mut self, key: &str, v: Option<f64>, default: f64) -> f64 {
        match v {
            None => default,
            Some(x) if x > 0.0 && x.is_finite() => x,
            Some(x) => {
                self.err("knobs", key, format!("{key} = {x} must be positive"));
                default
            }
        }
    }

    fn coeff(&mut self, key: &str, raw: Option<RawCoeff>, default: f64) -> CoefficientFn {
        let r = match raw {
            None => return CoefficientFn::constant(default),
            Some(RawCoeff::Number(v)) => return CoefficientFn::constant(v),
            Some(RawCoeff::Expr(src)) => CoefficientFn::from_expr(&src),
            Some(RawCoeff::Segments(recs)) => CoefficientFn::from_records(&recs),
        };
        r.unwrap_or_else(|e| {
            self.err("problem", key, format!("coefficient {key}: {e}"));
            CoefficientFn::constant(default)
        })
    }

    fn pair(&mut self, key: &str, raw: Option<Vec<f64>>) -> Option<RobinPair> {
        let Some(v) = raw else {
            self.err("problem", key, format!("missing boundary pair {key} = [alpha, beta]"));
            return None;
        };
        if v.len() != 2 {
            self.err("problem", key, format!("{key} needs two entries [alpha, beta], got {}", v.len()));
            return None;
        }
        match RobinPair::new(v[0], v[1]) {
            Ok(p) => Some(p),
            Err(e) => {
                self.err("problem", key, format!("{key}: {e}"));
                None
            }
        }
    }

    fn interval(&mut self, key: &str, v: &[f64]) -> (f64, f64) {
        if v.len() != 2 {
            self.err("internal", key, format!("{key} needs two entries, got {}", v.len()));
            return (0.0, 0.0);
        }
        (v[0], v[1])
    }
}

/// Parses and validates a configuration; every schema problem is reported.
pub fn parse_config(text: &str) -> Result<RunConfig, SchemaErrors> {
    parse_config_for(text, None)
}

/// As [`parse_config`], with `mode` taking precedence over `run.mode`.
pub fn parse_config_for(text: &str, mode: Option<Mode>) -> Result<RunConfig, SchemaErrors> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        SchemaErrors(vec![SchemaError {
            line,
            message: e.message().to_string(),
        }])
    })?;
    let mut c = Collector {
        text,
        errors: Vec::new(),
    };

    let mode = match (mode, raw.run.mode.as_deref()) {
        (Some(m), _) => m,
        (None, Some(name)) => Mode::parse(name).unwrap_or_else(|| {
            c.err("run", "mode", format!("unknown mode {name:?}"));
            Mode::Validate
        }),
        (None, None) => {
            c.errors.push(SchemaError {
                line: None,
                message: "no mode given (run.mode or the command line)".into(),
            });
            Mode::Validate
        }
    };
    if mode == Mode::Demo && raw.run.demo.is_none() {
        c.err("run", "demo", "demo mode needs a demo name");
    }

    let d = Knobs::default();
    let k = raw.knobs;
    let scheme = match k.scheme.as_deref() {
        None | Some("trapezoidal") => Scheme::Trapezoidal,
        Some("implicit-euler") => Scheme::ImplicitEuler,
        Some(other) => {
            c.err("knobs", "scheme", format!("unknown scheme {other:?} (trapezoidal or implicit-euler)"));
            Scheme::Trapezoidal
        }
    };
    let knobs = Knobs {
        n_eig: c.positive("n_eig", k.n_eig, d.n_eig),
        n_gen: c.positive("n_gen", k.n_gen, d.n_gen),
        bump_m: c.positive_f("bump_m", k.bump_m, d.bump_m),
        tol_quad: c.positive_f("tol_quad", k.tol_quad, d.tol_quad),
        tol_ode: c.positive_f("tol_ode", k.tol_ode, d.tol_ode),
        mesh_cells: c.positive("mesh_cells", k.mesh_cells, d.mesh_cells),
        control_steps: c.positive("control_steps", k.control_steps, d.control_steps),
        trajectory_steps: c.positive("trajectory_steps", k.trajectory_steps, d.trajectory_steps),
        x_points: c.positive("x_points", k.x_points, d.x_points),
        sim_cells: c.positive("sim_cells", k.sim_cells, d.sim_cells),
        sim_steps: c.positive("sim_steps", k.sim_steps, d.sim_steps),
        scheme,
        internal_x_points: c.positive("internal_x_points", k.internal_x_points, d.internal_x_points),
        internal_t_steps: c.positive("internal_t_steps", k.internal_t_steps, d.internal_t_steps),
    };

    let problem = match raw.problem {
        Some(p) => parse_problem(&mut c, p),
        None => {
            if mode != Mode::Demo {
                c.err("run", "mode", format!("mode {} needs a [problem] section", mode.name()));
            }
            None
        }
    };

    let internal = raw.internal.map(|r| {
        let omega = c.interval("omega", &r.omega);
        let inner = c.interval("inner", &r.inner);
        let ok = 0.0 < omega.0 && omega.0 < inner.0 && inner.0 < inner.1 && inner.1 < omega.1 && omega.1 < 1.0;
        if !ok {
            c.err("internal", "inner", "need 0 < omega.0 < inner.0 < inner.1 < omega.1 < 1");
        }
        (omega, inner)
    });
    if mode == Mode::Internal {
        if internal.is_none() {
            c.err("run", "mode", "internal mode needs an [internal] section with omega and inner");
        }
        if !matches!(problem, Some(Problem::General(_)) | None) {
            c.err("problem", "kind", "internal control needs kind = \"general\"");
        }
    }

    let threshold = match raw.verify {
        None => DEFAULT_THRESHOLD,
        Some(v) if v.threshold > 0.0 => v.threshold,
        Some(v) => {
            c.err("verify", "threshold", format!("threshold = {} must be positive", v.threshold));
            DEFAULT_THRESHOLD
        }
    };

    if !c.errors.is_empty() {
        return Err(SchemaErrors(c.errors));
    }
    Ok(RunConfig {
        mode,
        demo: raw.run.demo,
        out: raw.run.out.map(PathBuf::from),
        problem,
        internal,
        knobs,
        threshold,
    })
}

fn parse_problem(c: &mut Collector<'_>, p: RawProblem) -> Option<Problem> {
    let kind = p.kind.clone().unwrap_or_else(|| "general".into());
    let t_final = p.t_final.unwrap_or_else(|| {
        c.err("problem", "T", "missing horizon T");
        1.0
    });
    let tau = p.tau.unwrap_or(0.5 * t_final);
    let u0 = match p.u0.as_deref().map(Expr::parse) {
        Some(Ok(e)) => Smooth::Expr(e),
        Some(Err(e)) => {
            c.err("problem", "u0", format!("initial state: {e}"));
            Smooth::Expr(Expr::constant(0.0))
        }
        None => {
            c.err("problem", "u0", "missing initial state u0");
            Smooth::Expr(Expr::constant(0.0))
        }
    };
    let s = p.s.unwrap_or_else(|| {
        c.err("problem", "s", "missing Gevrey order s");
        1.5
    });
    if !(t_final > 0.0 && t_final.is_finite()) {
        c.err("problem", "T", format!("T = {t_final} must be positive"));
    }
    if !(tau > 0.0 && tau < t_final) {
        c.err("problem", "tau", format!("tau = {tau} must lie in (0, T)"));
    }
    let s_range = |c: &mut Collector<'_>, p: f64| {
        let s_max = 2.0 - 1.0 / p;
        if !(s > 1.0 && s < s_max) {
            c.err("problem", "s", format!("s = {s} violates 1 < s < 2 - 1/p = {s_max}"));
        }
    };
    let unused = |c: &mut Collector<'_>, key: &str, present: bool| {
        if present {
            c.err("problem", key, format!("{key} is not used by kind = {kind:?}"));
        }
    };
    match kind.as_str() {
        "general" => {
            unused(c, "mu", p.mu.is_some());
            unused(c, "dimension", p.dimension.is_some());
            let a = c.coeff("a", p.a, 1.0);
            let b = c.coeff("b", p.b, 0.0);
            let cc = c.coeff("c", p.c, 0.0);
            let rho = c.coeff("rho", p.rho, 1.0);
            let bc0 = c.pair("bc0", p.bc0);
            let bc1 = c.pair("bc1", p.bc1);
            let pp = p.p.unwrap_or(f64::INFINITY);
            if !(pp > 1.0) {
                c.err("problem", "p", format!("p = {pp} must exceed 1"));
            }
            s_range(c, pp);
            let k = p.k.unwrap_or_else(|| default_k(&cc, &rho));
            if !(k >= 0.0 && k.is_finite()) {
                c.err("problem", "k", format!("k = {k} must be finite and non-negative"));
            }
            Some(Problem::General(ProblemSpec {
                a,
                b,
                c: cc,
                rho,
                bc0: bc0?,
                bc1: bc1?,
                k,
                p: pp,
                t_final,
                tau,
                s,
                u0,
            }))
        }
        "inverse-square" | "radial" => {
            for (key, present) in [
                ("a", p.a.is_some()),
                ("b", p.b.is_some()),
                ("c", p.c.is_some()),
                ("rho", p.rho.is_some()),
                ("k", p.k.is_some()),
                ("p", p.p.is_some()),
                ("bc0", p.bc0.is_some()),
            ] {
                unused(c, key, present);
            }
            s_range(c, f64::INFINITY);
            let bc1 = c.pair("bc1", p.bc1)?;
            if kind == "radial" {
                unused(c, "mu", p.mu.is_some());
                let n = p.dimension.unwrap_or(0);
                if !(n == 2 || n == 3) {
                    c.err("problem", "dimension", format!("dimension = {n} must be 2 or 3"));
                }
                Some(Problem::Radial(RadialSpec {
                    dimension: n.max(0) as usize,
                    bc1,
                    t_final,
                    tau,
                    s,
                    u0,
                }))
            } else {
                unused(c, "dimension", p.dimension.is_some());
                let mu = p.mu.unwrap_or_else(|| {
                    c.err("problem", "mu", "missing potential coefficient mu");
                    0.0
                });
                if !(0.0..=0.25).contains(&mu) {
                    c.err("problem", "mu", format!("mu = {mu} must lie in [0, 1/4]"));
                }
                Some(Problem::InverseSquare(SingularPotentialSpec {
                    mu,
                    bc1,
                    t_final,
                    tau,
                    s,
                    u0,
                }))
            }
        }
        other => {
            c.err("problem", "kind", format!("unknown problem kind {other:?}"));
            None
        }
    }
}
