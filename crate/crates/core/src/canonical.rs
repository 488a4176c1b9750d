//! Reduction of the general problem to the canonical form
//!
//! ```text
//! u_yy = rho_hat(y) u_t,   alpha0_hat u + beta0_hat u_y = 0 at y = 0,
//!                          alpha1_hat u + beta1_hat u_y = h_hat at y = 1
//! ```
//!
//! through the drift gauge `B = int b/a`, the corrector `v` and the space map
//! `y(x) = L^-1 int_0^x (a v^2 e^B)^-1`, plus the inverse map used to pull
//! canonical trajectories back to the original variables.

use std::fmt;
use std::sync::Arc;

use flatness_model::coeff::CoefficientFn;
use flatness_model::gauss::{reference, NGL};
use flatness_model::mesh::{needs_grading, Grading, MapPolicy, Mesh, MeshFn, MeshOptions, Side};
use flatness_model::{ProblemSpec, RobinPair};

use crate::error::{CoreError, Result};

pub const CORRECTOR_NODES: usize = 4096;

type CellFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// `x -> int_lo^x f` on a mesh, with exact per-cell GL evaluation anywhere and
/// an inverse for positive integrands.
#[derive(Clone)]
pub struct Primitive {
    mesh: Arc<Mesh>,
    starts: Vec<f64>,
    integrand: CellFn,
}

impl fmt::Debug for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Primitive")
            .field("cells", &self.mesh.len())
            .field("total", &self.total())
            .finish()
    }
}

impl Primitive {
    pub fn new(mesh: Arc<Mesh>, integrand: impl Fn(usize, f64) -> f64 + Send + Sync + 'static) -> Self {
        let integrand: CellFn = Arc::new(integrand);
        let r = reference();
        let mut starts = Vec::with_capacity(mesh.len() + 1);
        let mut acc = 0.0;
        let mut comp = 0.0;
        starts.push(0.0);
        for (c, cell) in mesh.cells().iter().enumerate() {
            let s: f64 = (0..NGL)
                .map(|q| r.w[q] * cell.jacobian(r.xi[q]) * integrand(c, r.xi[q]))
                .sum();
            let y = s - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            starts.push(acc);
        }
        Self {
            mesh,
            starts,
            integrand,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn total(&self) -> f64 {
        self.starts[self.starts.len() - 1]
    }

    pub fn eval_cell(&self, c: usize, xi: f64) -> f64 {
        if xi <= 0.0 {
            return self.starts[c];
        }
        if xi >= 1.0 {
            return self.starts[c + 1];
        }
        let r = reference();
        let cell = &self.mesh.cells()[c];
        let s: f64 = (0..NGL)
            .map(|q| {
                let t = xi * r.xi[q];
                r.w[q] * cell.jacobian(t) * (self.integrand)(c, t)
            })
            .sum();
        self.starts[c] + xi * s
    }

    pub fn eval(&self, x: f64) -> f64 {
        let c = self.mesh.locate(x);
        self.eval_cell(c, self.mesh.cells()[c].xi_of(x))
    }

    /// Integrand value at reference coordinate `xi` of cell `c`.
    pub fn density_cell(&self, c: usize, xi: f64) -> f64 {
        (self.integrand)(c, xi)
    }

    /// Cell and reference coordinate where the primitive equals `target`.
    /// Requires a positive integrand.
    pub fn inverse_cell(&self, target: f64) -> (usize, f64) {
        let n = self.mesh.len();
        if target <= 0.0 {
            return (0, 0.0);
        }
        if target >= self.total() {
            return (n - 1, 1.0);
        }
        let c = (self.starts.partition_point(|&s| s <= target) - 1).min(n - 1);
        let (s0, s1) = (self.starts[c], self.starts[c + 1]);
        let cell = &self.mesh.cells()[c];
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut xi = ((target - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let scale = (s1 - s0).abs().max(f64::MIN_POSITIVE);
        for _ in 0..80 {
            let f = self.eval_cell(c, xi) - target;
            if f.abs() <= 1e-16 * scale.max(target.abs()) {
                break;
            }
            if f > 0.0 {
                hi = xi;
            } else {
                lo = xi;
            }
            let d = cell.jacobian(xi) * (self.integrand)(c, xi);
            let mut next = if d > 0.0 && d.is_finite() { xi - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - xi).abs() <= 1e-16 {
                xi = next;
                break;
            }
            xi = next;
            if hi - lo <= 1e-16 {
                break;
            }
        }
        (c, xi)
    }

    pub fn inverse(&self, target: f64) -> f64 {
        let (c, xi) = self.inverse_cell(target);
        self.mesh.cells()[c].point(xi)
    }
}

/// What synthesis needs to map canonical quantities back to `x`.
pub trait SpaceTransform: Send + Sync + fmt::Debug {
    fn l(&self) -> f64;
    fn k(&self) -> f64;
    fn y_of_x(&self, x: f64) -> f64;
    fn x_of_y(&self, y: f64) -> f64;
    fn v(&self, x: f64) -> f64;
    /// `a v_x`
    fn flux_v(&self, x: f64) -> f64;
    /// Drift gauge `B(x)`.
    fn gauge(&self, x: f64) -> f64;
    fn a(&self, x: f64) -> f64;
}

#[derive(Clone, Debug)]
pub struct CorrectorReport {
    pub flux0: f64,
    pub flux1: f64,
    /// Boundary fluxes from a solve on half as many nodes.
    pub flux0_coarse: f64,
    pub flux1_coarse: f64,
    pub stable: bool,
    pub v_min: f64,
    pub v_max: f64,
}

/// Solution of `-(a_tilde v')' + c_tilde v = 0`, `v(0) = v(1) = 1` in the
/// variable `z = l^-1 int_0^x 1/a_tilde`, where it reads `w'' = gamma w`.
#[derive(Clone, Debug)]
pub struct Corrector {
    pub l: f64,
    pub w: Vec<f64>,
    pub report: CorrectorReport,
}

impl Corrector {
    fn h(&self) -> f64 {
        1.0 / (self.w.len() - 1) as f64
    }

    /// Cubic Lagrange interpolation of `w` and its derivative at `z`.
    pub fn w_and_dw(&self, z: f64) -> (f64, f64) {
        let n = self.w.len() - 1;
        let h = self.h();
        let s = (z / h).clamp(0.0, n as f64);
        let j = (s.floor() as isize - 1).clamp(0, n as isize - 3) as usize;
        let t = s - j as f64;
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let mut val = 0.0;
        let mut der = 0.0;
        for i in 0..4 {
            let mut li = 1.0;
            let mut dli = 0.0;
            for m in 0..4 {
                if m == i {
                    continue;
                }
                let denom = nodes[i] - nodes[m];
                let mut prod = 1.0 / denom;
                for q in 0..4 {
                    if q != i && q != m {
                        prod *= (t - nodes[q]) / (nodes[i] - nodes[q]);
                    }
                }
                dli += prod;
                li *= (t - nodes[m]) / denom;
            }
            val += li * self.w[j + i];
            der += dli * self.w[j + i];
        }
        (val, der / h)
    }

    fn boundary_slopes(w: &[f64]) -> (f64, f64) {
        let n = w.len() - 1;
        let h = 1.0 / n as f64;
        let d0 = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h);
        let d1 = (3.0 * w[n] - 4.0 * w[n - 1] + w[n - 2]) / (2.0 * h);
        (d0, d1)
    }
}

/// Second-order finite differences for `w'' = gamma w`, `w(0) = w(1) = 1`.
pub fn solve_two_point(gamma: &[f64]) -> Result<Vec<f64>> {
    let n = gamma.len() - 1;
    if n < 2 {
        return Err(CoreError::SolveFailure("need at least three nodes".into()));
    }
    let h2 = 1.0 / (n as f64 * n as f64);
    let m = n - 1;
    let mut diag: Vec<f64> = (1..n).map(|j| 2.0 + h2 * gamma[j]).collect();
    let mut rhs = vec![0.0; m];
    rhs[0] += 1.0;
    rhs[m - 1] += 1.0;
    for i in 1..m {
        if diag[i - 1] == 0.0 || !diag[i - 1].is_finite() {
            return Err(CoreError::SolveFailure(format!("zero pivot at row {i}")));
        }
        let f = -1.0 / diag[i - 1];
        diag[i] += f;
        rhs[i] -= f * rhs[i - 1];
    }
    let mut sol = vec![0.0; m];
    if diag[m - 1] == 0.0 || !diag[m - 1].is_finite() {
        return Err(CoreError::SolveFailure("singular system".into()));
    }
    sol[m - 1] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        sol[i] = (rhs[i] + sol[i + 1]) / diag[i];
    }
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0);
    w.extend(sol);
    w.push(1.0);
    Ok(w)
}

/// Drift gauge, corrector and space map of a general problem.
#[derive(Clone, Debug)]
pub struct TransformChain {
    pub x_mesh: Arc<Mesh>,
    a: CoefficientFn,
    /// `B` at the x-mesh points, `None` when `b = 0`.
    gauge: Option<MeshFn>,
    /// `z`-primitive (`int 1/a_tilde`) and the corrector, `None` when `c_tilde = 0`.
    corrector: Option<(Primitive, Corrector)>,
    /// `v` and `a v_x` at the x-mesh points.
    v_fn: Option<(MeshFn, MeshFn)>,
    ymap: Primitive,
    l: f64,
    k: f64,
}

impl TransformChain {
    pub fn corrector_report(&self) -> Option<&CorrectorReport> {
        self.corrector.as_ref().map(|(_, c)| &c.report)
    }

    fn v_cell(&self, c: usize, xi: f64) -> f64 {
        self.v_fn.as_ref().map_or(1.0, |(v, _)| v.eval_xi(c, xi))
    }

    fn gauge_cell(&self, c: usize, xi: f64) -> f64 {
        self.gauge.as_ref().map_or(0.0, |g| g.eval_xi(c, xi))
    }

    /// `rho_hat` at the point `x(y)` given as (cell, xi) of the x-mesh.
    fn rho_hat_cell(&self, rho: &CoefficientFn, c: usize, xi: f64) -> f64 {
        let cell = &self.x_mesh.cells()[c];
        let v = self.v_cell(c, xi);
        let g = self.gauge_cell(c, xi);
        self.l * self.l * self.a.eval_in_cell(cell, xi) * v.powi(4) * (2.0 * g).exp() * rho.eval_in_cell(cell, xi)
    }
}

impl SpaceTransform for TransformChain {
    fn l(&self) -> f64 {
        self.l
    }
    fn k(&self) -> f64 {
        self.k
    }
    fn y_of_x(&self, x: f64) -> f64 {
        (self.ymap.eval(x) / self.l).clamp(0.0, 1.0)
    }
    fn x_of_y(&self, y: f64) -> f64 {
        self.ymap.inverse(y * self.l)
    }
    fn v(&self, x: f64) -> f64 {
        let c = self.x_mesh.locate(x);
        self.v_cell(c, self.x_mesh.cells()[c].xi_of(x))
    }
    fn flux_v(&self, x: f64) -> f64 {
        match &self.v_fn {
            None => 0.0,
            Some((_, f)) => f.eval(x),
        }
    }
    fn gauge(&self, x: f64) -> f64 {
        self.gauge.as_ref().map_or(0.0, |g| g.eval(x))
    }
    fn a(&self, x: f64) -> f64 {
        self.a.eval(x)
    }
}

fn breaks_of(fs: &[&CoefficientFn]) -> Vec<f64> {
    let mut b: Vec<f64> = fs.iter().flat_map(|f| f.breakpoints()).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn gradings_of(f: &CoefficientFn) -> Vec<Grading> {
    f.endpoint_exponents()
        .into_iter()
        .map(|e| Grading {
            point: e.point,
            side: if e.from_right { Side::Right } else { Side::Left },
            exponent: e.exponent,
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct ReductionOptions {
    pub mesh: MeshOptions,
    pub corrector_nodes: usize,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            mesh: MeshOptions {
                base_cells: 256,
                depth: 40,
                policy: MapPolicy::NegativeOnly,
            },
            corrector_nodes: CORRECTOR_NODES,
        }
    }
}

/// `B(x) = int_0^x b/a`, `a_tilde = a e^B`, `c_tilde = (K rho - c) e^B`.
/// `B` is `None` when the drift vanishes identically.
pub fn compute_drift_gauge(
    spec: &ProblemSpec,
    x_mesh: &Arc<Mesh>,
) -> (Option<MeshFn>, CoefficientFn, CoefficientFn) {
    let gauge = if spec.b.is_zero() {
        None
    } else {
        let ba = spec.b.product(&spec.a.recip());
        let cells = x_mesh.cells().to_vec();
        Some(MeshFn::cumulative_fn(x_mesh.clone(), 0.0, move |c, xi| {
            ba.eval_in_cell(&cells[c], xi)
        }))
    };
    let base = spec.rho.scale(spec.k).plus_scaled(&spec.c, -1.0);
    let (a_tilde, c_tilde) = match &gauge {
        None => (spec.a.clone(), base),
        Some(g) => {
            let g1 = g.clone();
            let g2 = g.clone();
            let c_tilde = if base.is_zero() {
                base
            } else {
                base.mul_fn(move |x| g2.eval(x).exp())
            };
            (spec.a.mul_fn(move |x| g1.eval(x).exp()), c_tilde)
        }
    };
    (gauge, a_tilde, c_tilde)
}

trait PlusScaled {
    fn plus_scaled(&self, other: &CoefficientFn, c: f64) -> CoefficientFn;
}

impl PlusScaled for CoefficientFn {
    /// `self + c * other`, both taken at face value on the common refinement.
    fn plus_scaled(&self, other: &CoefficientFn, c: f64) -> CoefficientFn {
        if other.is_zero() || c == 0.0 {
            return self.clone();
        }
        if self.is_zero() {
            return other.scale(c);
        }
        if let (Some(p), Some(q)) = (self.as_constant(), other.as_constant()) {
            return CoefficientFn::constant(p + c * q);
        }
        let a = self.clone();
        let b = other.clone();
        let mut breaks = self.breakpoints();
        breaks.extend(other.breakpoints());
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let ones = CoefficientFn::piecewise_constant(&breaks, &vec![1.0; breaks.len() + 1])
            .expect("breakpoints come from valid partitions");
        ones.mul_fn(move |x| a.eval(x) + c * b.eval(x))
    }
}

/// Corrector on a uniform z-grid with `nodes` points. Returns `None` when
/// `c_tilde` vanishes (then `v = 1`).
pub fn solve_corrector(
    a_tilde: &CoefficientFn,
    c_tilde: &CoefficientFn,
    x_mesh: &Arc<Mesh>,
    nodes: usize,
) -> Result<Option<(Primitive, Corrector)>> {
    if c_tilde.is_zero() {
        return Ok(None);
    }
    let inv = a_tilde.recip();
    let cells = x_mesh.cells().to_vec();
    let zprim = Primitive::new(x_mesh.clone(), move |c, xi| inv.eval_in_cell(&cells[c], xi));
    let l = zprim.total();
    let cells = x_mesh.cells().to_vec();
    let gamma_at = |n: usize| -> Vec<f64> {
        (0..=n)
            .map(|j| {
                if j == 0 || j == n {
                    return 0.0;
                }
                let (c, xi) = zprim.inverse_cell(l * j as f64 / n as f64);
                let cell = &cells[c];
                l * l * a_tilde.eval_in_cell(cell, xi) * c_tilde.eval_in_cell(cell, xi)
            })
            .collect()
    };
    let n = nodes - 1;
    let w = solve_two_point(&gamma_at(n))?;
    let wc = solve_two_point(&gamma_at(n / 2))?;
    let (d0, d1) = Corrector::boundary_slopes(&w);
    let (c0, c1) = Corrector::boundary_slopes(&wc);
    let stable = [(d0, c0), (d1, c1)]
        .iter()
        .all(|(f, c)| (f - c).abs() <= 1e-3 * f.abs().max(1e-6));
    let v_min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let report = CorrectorReport {
        flux0: d0 / l,
        flux1: d1 / l,
        flux0_coarse: c0 / l,
        flux1_coarse: c1 / l,
        stable,
        v_min,
        v_max,
    };
    Ok(Some((zprim, Corrector { l, w, report })))
}

/// Builds the full transform chain of an admissible problem.
pub fn build_chain(spec: &ProblemSpec, opts: &ReductionOptions) -> Result<TransformChain> {
    let breaks = breaks_of(&[&spec.a, &spec.b, &spec.c, &spec.rho]);
    let mut gradings = gradings_of(&spec.a.recip());
    gradings.extend(gradings_of(&spec.rho));
    gradings.extend(gradings_of(&spec.b.product(&spec.a.recip())));
    let x_mesh = Arc::new(Mesh::graded(0.0, 1.0, &breaks, &gradings, opts.mesh));

    let (gauge, a_tilde, c_tilde) = compute_drift_gauge(spec, &x_mesh);
    let corrector = solve_corrector(&a_tilde, &c_tilde, &x_mesh, opts.corrector_nodes)?;

    let v_fn = corrector.as_ref().map(|(zprim, corr)| {
        let l = corr.l;
        let gauge = gauge.clone();
        let v = MeshFn::sample(x_mesh.clone(), |c, xi, _| corr.w_and_dw(zprim.eval_cell(c, xi) / l).0);
        let flux = MeshFn::sample(x_mesh.clone(), |c, xi, _| {
            let b = gauge.as_ref().map_or(0.0, |g| g.eval_xi(c, xi));
            (-b).exp() * corr.w_and_dw(zprim.eval_cell(c, xi) / l).1 / l
        });
        (v, flux)
    });

    let cells = x_mesh.cells().to_vec();
    let a = spec.a.clone();
    let g2 = gauge.clone();
    let v2 = v_fn.as_ref().map(|(v, _)| v.clone());
    let ymap = Primitive::new(x_mesh.clone(), move |c, xi| {
        let v = v2.as_ref().map_or(1.0, |v| v.eval_xi(c, xi));
        let b = g2.as_ref().map_or(0.0, |g| g.eval_xi(c, xi));
        1.0 / (a.eval_in_cell(&cells[c], xi) * v * v * b.exp())
    });
    let l = ymap.total();
    if !(l.is_finite() && l > 0.0) {
        return Err(CoreError::SolveFailure(format!("space map normalizer L = {l}")));
    }
    Ok(TransformChain {
        x_mesh,
        a: spec.a.clone(),
        gauge,
        corrector,
        v_fn,
        ymap,
        l,
        k: spec.k,
    })
}

#[derive(Clone, Debug, Default)]
pub struct CanonicalDiagnostics {
    pub flux0: f64,
    pub flux1: f64,
    pub flux_stable: bool,
    pub rho_hat_p_integral: f64,
    pub rho_hat_min: f64,
}

pub type StateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Canonical problem on `y in [0, 1]`.
#[derive(Clone)]
pub struct CanonicalProblem {
    pub mesh: Arc<Mesh>,
    pub rho_hat: MeshFn,
    /// `J * rho_hat` per cell, J the Jacobian of the cell map.
    pub jrho: MeshFn,
    pub bc0_hat: RobinPair,
    pub bc1_hat: RobinPair,
    pub u0_hat: StateFn,
    pub p: f64,
    pub gradings: Vec<Grading>,
    pub transform: Arc<dyn SpaceTransform>,
    pub diagnostics: CanonicalDiagnostics,
}

impl fmt::Debug for CanonicalProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CanonicalProblem")
            .field("cells", &self.mesh.len())
            .field("bc0_hat", &self.bc0_hat)
            .field("bc1_hat", &self.bc1_hat)
            .field("p", &self.p)
            .finish()
    }
}

impl CanonicalProblem {
    /// Canonical problem from a weight `rho_hat(y)` given pointwise (per y-cell).
    #[allow(clippy::too_many_arguments)]
    pub fn from_weight(
        weight: impl Fn(usize, f64, f64) -> f64,
        mesh: Arc<Mesh>,
        gradings: Vec<Grading>,
        bc0_hat: RobinPair,
        bc1_hat: RobinPair,
        u0_hat: StateFn,
        p: f64,
        transform: Arc<dyn SpaceTransform>,
    ) -> Self {
        let rho_hat = MeshFn::sample(mesh.clone(), |c, xi, y| weight(c, xi, y));
        let cells = mesh.cells().to_vec();
        // J rho_hat stays bounded on power-mapped cells even when rho_hat does not
        let jrho = MeshFn::sample(mesh.clone(), |c, xi, y| cells[c].jacobian(xi) * weight(c, xi, y));
        let mut me = Self {
            mesh,
            rho_hat,
            jrho,
            bc0_hat,
            bc1_hat,
            u0_hat,
            p,
            gradings,
            transform,
            diagnostics: CanonicalDiagnostics::default(),
        };
        me.diagnostics.rho_hat_min = me
            .rho_hat
            .values()
            .iter()
            .flat_map(|v| v[1..=NGL].iter().copied())
            .fold(f64::INFINITY, f64::min);
        me.diagnostics.rho_hat_p_integral = if p.is_finite() {
            me.integrate_weighted(|_, _| 1.0, p)
        } else {
            me.rho_hat.sup_abs()
        };
        me
    }

    fn integrate_weighted(&self, f: impl Fn(usize, usize) -> f64, p: f64) -> f64 {
        self.mesh.integrate(|c, k| self.rho_hat.gl(c, k).powf(p) * f(c, k))
    }

    /// `int_0^1 f rho_hat dy` for `f(c, k)` given at GL nodes.
    pub fn weighted_integral(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let r = reference();
        let mut sum = 0.0;
        for c in 0..self.mesh.len() {
            for k in 0..NGL {
                sum += r.w[k] * self.jrho.gl(c, k) * f(c, k);
            }
        }
        sum
    }

    /// `y` coordinates of the GL nodes of cell `c`.
    pub fn gl_points(&self, c: usize) -> [f64; NGL] {
        let p = self.mesh.points(c);
        let mut out = [0.0; NGL];
        out.copy_from_slice(&p[1..=NGL]);
        out
    }

    /// Same problem in the reflected variable `1 - y`, with the two Robin pairs
    /// exchanged (the derivative changes sign under reflection).
    pub fn mirrored(&self) -> Self {
        let mesh = Arc::new(self.mesh.mirrored());
        let rho_hat = self.rho_hat.mirrored(mesh.clone());
        let jrho = self.jrho.mirrored(mesh.clone());
        let u0 = self.u0_hat.clone();
        let gradings = self
            .gradings
            .iter()
            .map(|g| Grading {
                point: 1.0 - g.point,
                side: match g.side {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                },
                exponent: g.exponent,
            })
            .collect();
        Self {
            mesh,
            rho_hat,
            jrho,
            bc0_hat: RobinPair {
                alpha: self.bc1_hat.alpha,
                beta: -self.bc1_hat.beta,
            },
            bc1_hat: RobinPair {
                alpha: self.bc0_hat.alpha,
                beta: -self.bc0_hat.beta,
            },
            u0_hat: Arc::new(move |y| u0(1.0 - y)),
            p: self.p,
            gradings,
            transform: self.transform.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn with_bc1(mut self, bc1_hat: RobinPair) -> Self {
        self.bc1_hat = bc1_hat;
        self
    }
}

/// Exponent of `rho_hat` in `y` at a point where `a ~ d^ea` and `rho ~ d^er`.
pub fn weight_exponent(ea: f64, er: f64) -> f64 {
    (ea + er) / (1.0 - ea)
}

fn exponent_at(f: &CoefficientFn, point: f64, side: Side) -> f64 {
    f.endpoint_exponents()
        .into_iter()
        .filter(|e| e.point == point && e.from_right == (side == Side::Right))
        .map(|e| e.exponent)
        .sum()
}

/// Canonical problem of a general spec: `rho_hat(y(x)) = L^2 a v^4 e^{2B} rho`,
/// boundary pairs `(alpha0 + beta0 (a v_x)(0), beta0 / L)` and
/// `(alpha1 + beta1 (a v_x)(1), beta1 / (L e^{B(1)}))`, `u0_hat = u0 / v`.
pub fn assemble_canonical(spec: &ProblemSpec, chain: Arc<TransformChain>, opts: &ReductionOptions) -> CanonicalProblem {
    let mut y_breaks = Vec::new();
    let mut gradings = Vec::new();
    let mut points: Vec<f64> = breaks_of(&[&spec.a, &spec.b, &spec.c, &spec.rho]);
    points.push(0.0);
    points.push(1.0);
    for e in spec.a.endpoint_exponents().into_iter().chain(spec.rho.endpoint_exponents()) {
        points.push(e.point);
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    for &x in &points {
        let y = chain.y_of_x(x);
        if x > 0.0 && x < 1.0 {
            y_breaks.push(y);
        }
        for side in [Side::Left, Side::Right] {
            if (side == Side::Left && x == 0.0) || (side == Side::Right && x == 1.0) {
                continue;
            }
            let ea = exponent_at(&spec.a, x, side);
            let er = exponent_at(&spec.rho, x, side);
            let kappa = weight_exponent(ea, er);
            if needs_grading(kappa) {
                gradings.push(Grading {
                    point: y,
                    side,
                    exponent: kappa,
                });
            }
        }
    }
    let mesh = Arc::new(Mesh::graded(0.0, 1.0, &y_breaks, &gradings, opts.mesh));
    let rho = spec.rho.clone();
    let ch = chain.clone();
    let weight = move |_c: usize, _xi: f64, y: f64| {
        let (c, xi) = ch.ymap.inverse_cell(y * ch.l);
        ch.rho_hat_cell(&rho, c, xi)
    };
    let (flux0, flux1, stable) = match chain.corrector_report() {
        Some(r) => (r.flux0, r.flux1 * (-chain.gauge(1.0)).exp(), r.stable),
        None => (0.0, 0.0, true),
    };
    let l = chain.l;
    let b1 = chain.gauge(1.0);
    let bc0_hat = RobinPair {
        alpha: spec.bc0.alpha + spec.bc0.beta * flux0,
        beta: spec.bc0.beta / l,
    };
    let bc1_hat = RobinPair {
        alpha: spec.bc1.alpha + spec.bc1.beta * flux1,
        beta: spec.bc1.beta / (l * b1.exp()),
    };
    let u0 = spec.u0.clone();
    let ch = chain.clone();
    let u0_hat: StateFn = Arc::new(move |y| {
        let x = ch.x_of_y(y);
        u0.eval(x) / ch.v(x)
    });
    let mut cp = CanonicalProblem::from_weight(weight, mesh, gradings, bc0_hat, bc1_hat, u0_hat, spec.p, chain);
    cp.diagnostics.flux0 = flux0;
    cp.diagnostics.flux1 = flux1;
    cp.diagnostics.flux_stable = stable;
    cp
}

/// Reduction of an admissible spec.
pub fn reduce(spec: &ProblemSpec, opts: &ReductionOptions) -> Result<CanonicalProblem> {
    spec.check_structure()?;
    let chain = Arc::new(build_chain(spec, opts)?);
    Ok(assemble_canonical(spec, chain, opts))
}

/// Original-variable state and flux from canonical `u_hat` and `u_hat_y` at `y(x)`:
/// `u = e^{Kt} v u_hat`, `a u_x = e^{Kt} ((a v_x) u_hat + e^{-B} (L v)^-1 u_hat_y)`.
pub fn pull_back(tr: &dyn SpaceTransform, x: f64, t: f64, u_hat: f64, u_hat_y: f64) -> (f64, f64) {
    let ekt = (tr.k() * t).exp();
    let v = tr.v(x);
    let u = ekt * v * u_hat;
    let flux = ekt * (tr.flux_v(x) * u_hat + (-tr.gauge(x)).exp() / (tr.l() * v) * u_hat_y);
    (u, flux)
}
