//! Graded cell meshes and functions sampled on them.
//!
//! Every cell maps the reference interval [0,1] onto `[lo, hi]`, either affinely
//! or by a power map that concentrates points at one end. A [`MeshFn`] stores
//! ten values per cell (both ends and the eight Gauss–Legendre nodes) and
//! interpolates in the reference coordinate.

use std::sync::Arc;

use crate::gauss::{bary_eval, reference, NGL, NPTS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellMap {
    Affine,
    /// `x = lo + h * xi^m`
    PowerLeft(f64),
    /// `x = hi - h * (1 - xi)^m`
    PowerRight(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
    pub map: CellMap,
}

impl Cell {
    pub fn affine(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            map: CellMap::Affine,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn point(&self, xi: f64) -> f64 {
        let h = self.width();
        match self.map {
            CellMap::Affine => self.lo + h * xi,
            CellMap::PowerLeft(m) => self.lo + h * xi.powf(m),
            CellMap::PowerRight(m) => self.hi - h * (1.0 - xi).powf(m),
        }
    }

    /// Distance from `lo`, accurate near `lo` for left-graded cells.
    pub fn dist_lo(&self, xi: f64) -> f64 {
        let h = self.width();
        match self.map {
            CellMap::Affine => h * xi,
            CellMap::PowerLeft(m) => h * xi.powf(m),
            CellMap::PowerRight(m) => h * (1.0 - (1.0 - xi).powf(m)),
        }
    }

    /// Distance to `hi`, accurate near `hi` for right-graded cells.
    pub fn dist_hi(&self, xi: f64) -> f64 {
        let h = self.width();
        match self.map {
            CellMap::Affine => h * (1.0 - xi),
            CellMap::PowerLeft(m) => h * (1.0 - xi.powf(m)),
            CellMap::PowerRight(m) => h * (1.0 - xi).powf(m),
        }
    }

    pub fn jacobian(&self, xi: f64) -> f64 {
        let h = self.width();
        match self.map {
            CellMap::Affine => h,
            CellMap::PowerLeft(m) => h * m * xi.powf(m - 1.0),
            CellMap::PowerRight(m) => h * m * (1.0 - xi).powf(m - 1.0),
        }
    }

    pub fn xi_of(&self, x: f64) -> f64 {
        let h = self.width();
        let xi = match self.map {
            CellMap::Affine => (x - self.lo) / h,
            CellMap::PowerLeft(m) => ((x - self.lo) / h).max(0.0).powf(1.0 / m),
            CellMap::PowerRight(m) => 1.0 - ((self.hi - x) / h).max(0.0).powf(1.0 / m),
        };
        xi.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// The singular behavior lives in the cells to the left of the point.
    Left,
    /// The singular behavior lives in the cells to the right of the point.
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grading {
    pub point: f64,
    pub side: Side,
    pub exponent: f64,
}

/// Whether an endpoint exponent calls for a graded mesh.
pub fn needs_grading(exponent: f64) -> bool {
    exponent != 0.0 && (exponent < 0.0 || exponent.fract() != 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapPolicy {
    /// Power map for the innermost cell only when the exponent is negative.
    NegativeOnly,
    /// Power map for every graded endpoint.
    Always,
}

#[derive(Clone, Copy, Debug)]
pub struct MeshOptions {
    pub base_cells: usize,
    pub depth: usize,
    pub policy: MapPolicy,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            base_cells: 256,
            depth: 40,
            policy: MapPolicy::NegativeOnly,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    cells: Vec<Cell>,
}

impl Mesh {
    pub fn from_cells(cells: Vec<Cell>) -> Self {
        assert!(!cells.is_empty());
        Self { cells }
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        Self::graded(
            lo,
            hi,
            &[],
            &[],
            MeshOptions {
                base_cells: n,
                depth: 0,
                policy: MapPolicy::NegativeOnly,
            },
        )
    }

    /// Mesh of `[lo, hi]` whose cells never straddle `breaks` and which is
    /// geometrically graded (ratio 1/2) toward each graded point.
    pub fn graded(lo: f64, hi: f64, breaks: &[f64], gradings: &[Grading], opts: MeshOptions) -> Self {
        let mut edges = vec![lo];
        edges.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
        edges.extend(gradings.iter().map(|g| g.point).filter(|&b| b > lo && b < hi));
        edges.push(hi);
        edges.sort_by(f64::total_cmp);
        edges.dedup();

        let find = |p: f64, side: Side| {
            gradings
                .iter()
                .filter(|g| g.point == p && g.side == side && needs_grading(g.exponent))
                .map(|g| g.exponent)
                .reduce(f64::min)
        };
        let map_for = |e: f64| match opts.policy {
            MapPolicy::NegativeOnly if e >= 0.0 => None,
            _ => Some(1.0 / (1.0 + e)),
        };

        let mut cells = Vec::new();
        for w in edges.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let gl = find(s0, Side::Right).filter(|_| opts.depth > 0);
            let gr = find(s1, Side::Left).filter(|_| opts.depth > 0);
            let frac = (s1 - s0) / (hi - lo);
            let mut n = ((opts.base_cells as f64) * frac).round().max(1.0) as usize;
            if gl.is_some() && gr.is_some() {
                n = n.max(2);
            }
            let h = (s1 - s0) / n as f64;
            for j in 0..n {
                let a = s0 + h * j as f64;
                let b = if j + 1 == n { s1 } else { s0 + h * (j + 1) as f64 };
                if j == 0 && gl.is_some() {
                    let e = gl.expect("checked");
                    let width = b - a;
                    let inner = width * 0.5f64.powi(opts.depth as i32);
                    cells.push(Cell {
                        lo: a,
                        hi: a + inner,
                        map: map_for(e).map_or(CellMap::Affine, CellMap::PowerLeft),
                    });
                    for k in (0..opts.depth).rev() {
                        let c_lo = a + width * 0.5f64.powi(k as i32 + 1);
                        let c_hi = if k == 0 { b } else { a + width * 0.5f64.powi(k as i32) };
                        cells.push(Cell::affine(c_lo, c_hi));
                    }
                } else if j + 1 == n && gr.is_some() {
                    let e = gr.expect("checked");
                    let width = b - a;
                    for k in 0..opts.depth {
                        let c_lo = if k == 0 { a } else { b - width * 0.5f64.powi(k as i32) };
                        let c_hi = b - width * 0.5f64.powi(k as i32 + 1);
                        cells.push(Cell::affine(c_lo, c_hi));
                    }
                    let inner = width * 0.5f64.powi(opts.depth as i32);
                    cells.push(Cell {
                        lo: b - inner,
                        hi: b,
                        map: map_for(e).map_or(CellMap::Affine, CellMap::PowerRight),
                    });
                } else {
                    cells.push(Cell::affine(a, b));
                }
            }
        }
        Self { cells }
    }

    /// Image under `t -> lo + hi - t`.
    pub fn mirrored(&self) -> Self {
        let (lo, hi) = (self.lo(), self.hi());
        let cells = self
            .cells
            .iter()
            .rev()
            .map(|c| Cell {
                lo: lo + hi - c.hi,
                hi: lo + hi - c.lo,
                map: match c.map {
                    CellMap::Affine => CellMap::Affine,
                    CellMap::PowerLeft(m) => CellMap::PowerRight(m),
                    CellMap::PowerRight(m) => CellMap::PowerLeft(m),
                },
            })
            .collect();
        Self { cells }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.cells[0].lo
    }

    pub fn hi(&self) -> f64 {
        self.cells[self.cells.len() - 1].hi
    }

    pub fn locate(&self, t: f64) -> usize {
        self.cells.partition_point(|c| c.hi <= t).min(self.cells.len() - 1)
    }

    /// Positions of the stored points of cell `c`.
    pub fn points(&self, c: usize) -> [f64; NPTS] {
        let r = reference();
        let cell = &self.cells[c];
        let mut p = [0.0; NPTS];
        for (k, &xi) in r.pts.iter().enumerate() {
            p[k] = cell.point(xi);
        }
        p[0] = cell.lo;
        p[NPTS - 1] = cell.hi;
        p
    }

    /// `sum_c sum_k w_k J_c(xi_k) f(c, k)` over the GL nodes.
    pub fn integrate(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let r = reference();
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (c, cell) in self.cells.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..NGL {
                s += r.w[k] * cell.jacobian(r.xi[k]) * f(c, k);
            }
            let y = s - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }
}

/// A function sampled at the stored points of every cell of a mesh.
#[derive(Clone, Debug)]
pub struct MeshFn {
    mesh: Arc<Mesh>,
    vals: Vec<[f64; NPTS]>,
}

impl MeshFn {
    pub fn new(mesh: Arc<Mesh>, vals: Vec<[f64; NPTS]>) -> Self {
        assert_eq!(mesh.len(), vals.len());
        Self { mesh, vals }
    }

    /// Samples `f(c, xi, t)` at the stored points. Non-finite end values (at a
    /// singular endpoint) are replaced by extrapolation of the GL-node values.
    pub fn sample(mesh: Arc<Mesh>, mut f: impl FnMut(usize, f64, f64) -> f64) -> Self {
        let r = reference();
        let mut vals = Vec::with_capacity(mesh.len());
        for c in 0..mesh.len() {
            let p = mesh.points(c);
            let mut v = [0.0; NPTS];
            for k in 1..=NGL {
                v[k] = f(c, r.pts[k], p[k]);
            }
            for k in [0, NPTS - 1] {
                let val = f(c, r.pts[k], p[k]);
                v[k] = if val.is_finite() {
                    val
                } else {
                    bary_eval(&r.xi, &r.bary_gl, &v[1..=NGL], r.pts[k])
                };
            }
            vals.push(v);
        }
        Self { mesh, vals }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64) -> f64) -> Self {
        Self::sample(mesh, |_, _, t| f(t))
    }

    pub fn constant(mesh: Arc<Mesh>, v: f64) -> Self {
        let n = mesh.len();
        Self {
            mesh,
            vals: vec![[v; NPTS]; n],
        }
    }

    /// Cumulative integral `start + int_lo^t f`, where `f(c, k)` is the integrand
    /// at GL node `k` of cell `c` (the Jacobian is applied here).
    pub fn cumulative(mesh: Arc<Mesh>, start: f64, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let r = reference();
        let mut vals = Vec::with_capacity(mesh.len());
        let mut acc = start;
        for (c, cell) in mesh.cells().iter().enumerate() {
            let mut g = [0.0; NGL];
            for k in 0..NGL {
                g[k] = cell.jacobian(r.xi[k]) * f(c, k);
            }
            let mut v = [0.0; NPTS];
            v[0] = acc;
            for k in 0..NGL {
                let mut s = 0.0;
                for j in 0..NGL {
                    s += r.cum[k][j] * g[j];
                }
                v[k + 1] = acc + s;
            }
            let total: f64 = (0..NGL).map(|j| r.w[j] * g[j]).sum();
            acc += total;
            v[NPTS - 1] = acc;
            vals.push(v);
        }
        Self { mesh, vals }
    }

    /// Cumulative integral `start + int_lo^t f` for an integrand `f(c, xi)`
    /// evaluable anywhere in the cell; each stored point gets its own GL rule.
    pub fn cumulative_fn(mesh: Arc<Mesh>, start: f64, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let r = reference();
        let mut vals = Vec::with_capacity(mesh.len());
        let mut acc = start;
        for (c, cell) in mesh.cells().iter().enumerate() {
            let mut v = [0.0; NPTS];
            v[0] = acc;
            for k in 0..NGL {
                let xk = r.xi[k];
                let mut s = 0.0;
                for q in 0..NGL {
                    let xi = xk * r.xi[q];
                    s += r.w[q] * cell.jacobian(xi) * f(c, xi);
                }
                v[k + 1] = acc + xk * s;
            }
            let total: f64 = (0..NGL)
                .map(|q| r.w[q] * cell.jacobian(r.xi[q]) * f(c, r.xi[q]))
                .sum();
            acc += total;
            v[NPTS - 1] = acc;
            vals.push(v);
        }
        Self { mesh, vals }
    }

    /// `t -> f(lo + hi - t)` on the mirrored mesh. The stored points of the
    /// reference element are symmetric, so values are simply reversed.
    pub fn mirrored(&self, mesh: Arc<Mesh>) -> Self {
        assert_eq!(mesh.len(), self.vals.len());
        let vals = self
            .vals
            .iter()
            .rev()
            .map(|v| {
                let mut r = *v;
                r.reverse();
                r
            })
            .collect();
        Self { mesh, vals }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[[f64; NPTS]] {
        &self.vals
    }

    /// Value at GL node `k` of cell `c`.
    pub fn gl(&self, c: usize, k: usize) -> f64 {
        self.vals[c][k + 1]
    }

    pub fn eval_xi(&self, c: usize, xi: f64) -> f64 {
        let r = reference();
        bary_eval(&r.pts, &r.bary, &self.vals[c], xi)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let c = self.mesh.locate(t);
        let xi = self.mesh.cells()[c].xi_of(t);
        self.eval_xi(c, xi)
    }

    pub fn first(&self) -> f64 {
        self.vals[0][0]
    }

    pub fn last(&self) -> f64 {
        self.vals[self.vals.len() - 1][NPTS - 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            vals: self.vals.iter().map(|v| v.map(&f)).collect(),
        }
    }

    pub fn zip(&self, other: &MeshFn, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(Arc::ptr_eq(&self.mesh, &other.mesh) || self.mesh.len() == other.mesh.len());
        let vals = self
            .vals
            .iter()
            .zip(&other.vals)
            .map(|(a, b)| {
                let mut v = [0.0; NPTS];
                for k in 0..NPTS {
                    v[k] = f(a[k], b[k]);
                }
                v
            })
            .collect();
        Self {
            mesh: self.mesh.clone(),
            vals,
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.vals
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// All stored (position, value) pairs in increasing position, cell ends shared.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.vals.len() * (NPTS - 1) + 1);
        for (c, v) in self.vals.iter().enumerate() {
            let p = self.mesh.points(c);
            let start = if c == 0 { 0 } else { 1 };
            for k in start..NPTS {
                out.push((p[k], v[k]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn graded_mesh_covers_interval_without_gaps() {
        let m = Mesh::graded(
            0.0,
            1.0,
            &[0.5],
            &[
                Grading {
                    point: 0.0,
                    side: Side::Right,
                    exponent: -0.5,
                },
                Grading {
                    point: 0.5,
                    side: Side::Left,
                    exponent: 0.3,
                },
            ],
            MeshOptions {
                base_cells: 8,
                depth: 10,
                policy: MapPolicy::NegativeOnly,
            },
        );
        let cells = m.cells();
        assert_eq!(cells[0].lo, 0.0);
        assert_eq!(cells[cells.len() - 1].hi, 1.0);
        for w in cells.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
            assert!(w[0].lo < w[0].hi);
        }
        assert!(matches!(cells[0].map, CellMap::PowerLeft(m) if (m - 2.0).abs() < 1e-15));
        assert!(cells[0].width() < 1e-3 / 8.0);
        assert!(cells.iter().any(|c| c.hi == 0.5));
    }

    #[test]
    fn mirrored_function_matches_reflection() {
        let m = Arc::new(Mesh::graded(
            0.0,
            1.0,
            &[0.3],
            &[Grading {
                point: 0.0,
                side: Side::Right,
                exponent: -0.5,
            }],
            MeshOptions {
                base_cells: 10,
                depth: 6,
                policy: MapPolicy::NegativeOnly,
            },
        ));
        let f = MeshFn::from_fn(m.clone(), |x| x.sqrt() + x * x);
        let mm = Arc::new(m.mirrored());
        let g = f.mirrored(mm.clone());
        assert!(matches!(mm.cells().last().unwrap().map, CellMap::PowerRight(_)));
        for t in [0.05, 0.4, 0.69, 0.999] {
            assert_relative_eq!(g.eval(t), f.eval(1.0 - t), epsilon = 1e-12);
        }
    }

    #[test]
    fn cell_maps_are_consistent() {
        for map in [CellMap::Affine, CellMap::PowerLeft(2.0), CellMap::PowerRight(0.7)] {
            let c = Cell { lo: 0.25, hi: 0.5, map };
            for xi in [0.0, 0.1, 0.5, 0.9, 1.0] {
                let x = c.point(xi);
                assert_relative_eq!(c.xi_of(x), xi, epsilon = 1e-12);
                assert_relative_eq!(c.dist_lo(xi), x - 0.25, epsilon = 1e-15);
                assert_relative_eq!(c.dist_hi(xi), 0.5 - x, epsilon = 1e-15);
            }
            let d = 1e-6;
            let fd = (c.point(0.4 + d) - c.point(0.4 - d)) / (2.0 * d);
            assert_relative_eq!(c.jacobian(0.4), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn cumulative_integral_of_singular_function() {
        let m = Arc::new(Mesh::graded(
            0.0,
            1.0,
            &[],
            &[Grading {
                point: 0.0,
                side: Side::Right,
                exponent: -0.5,
            }],
            MeshOptions {
                base_cells: 16,
                depth: 20,
                policy: MapPolicy::NegativeOnly,
            },
        ));
        let r = reference();
        let cells = m.cells().to_vec();
        let g = MeshFn::cumulative(m.clone(), 0.0, |c, k| 1.0 / cells[c].point(r.xi[k]).sqrt());
        assert_relative_eq!(g.last(), 2.0, epsilon = 1e-12);
        let h = MeshFn::cumulative_fn(m.clone(), 0.0, |c, xi| 1.0 / cells[c].point(xi).sqrt());
        assert_relative_eq!(h.last(), 2.0, epsilon = 1e-12);
        for (x, v) in h.samples() {
            assert_relative_eq!(v, 2.0 * x.sqrt(), epsilon = 1e-13, max_relative = 1e-12);
        }
        for x in [1e-9, 0.01, 0.3, 0.77] {
            assert_relative_eq!(h.eval(x), 2.0 * x.sqrt(), max_relative = 1e-8);
        }
    }

    #[test]
    fn interpolation_and_integration_on_uniform_mesh() {
        let m = Arc::new(Mesh::uniform(0.0, 1.0, 64));
        let f = MeshFn::from_fn(m.clone(), |x| (3.0 * x).sin());
        assert_relative_eq!(f.eval(0.123456), (3.0f64 * 0.123456).sin(), epsilon = 1e-13);
        let r = reference();
        let cells = m.cells().to_vec();
        let i = m.integrate(|c, k| (3.0 * cells[c].point(r.xi[k])).sin());
        assert_relative_eq!(i, (1.0 - 3f64.cos()) / 3.0, epsilon = 1e-14);
        assert_eq!(f.samples().len(), 64 * 9 + 1);
    }
}
