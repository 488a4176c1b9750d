//! Gauss–Legendre rules and the fixed 8-point reference element on [0,1].

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1],
/// nodes in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

pub const NGL: usize = 8;
/// Points per cell stored by mesh functions: left end, the GL nodes, right end.
pub const NPTS: usize = NGL + 2;

/// Reference data on [0,1] shared by all meshes.
pub struct RefElement {
    /// GL nodes on [0,1].
    pub xi: [f64; NGL],
    /// GL weights on [0,1] (sum to 1).
    pub w: [f64; NGL],
    /// Stored points: 0, the GL nodes, 1.
    pub pts: [f64; NPTS],
    /// Barycentric weights for interpolation through the stored points.
    pub bary: [f64; NPTS],
    /// Barycentric weights for interpolation through the GL nodes only.
    pub bary_gl: [f64; NGL],
    /// `cum[k][j]`: integral over [0, xi_k] of the j-th Lagrange basis polynomial on the GL nodes.
    pub cum: [[f64; NGL]; NGL],
}

pub fn reference() -> &'static RefElement {
    static REF: OnceLock<RefElement> = OnceLock::new();
    REF.get_or_init(|| {
        let (z, wz) = gauss_legendre(NGL);
        let mut xi = [0.0; NGL];
        let mut w = [0.0; NGL];
        for k in 0..NGL {
            xi[k] = 0.5 * (z[k] + 1.0);
            w[k] = 0.5 * wz[k];
        }
        let mut pts = [0.0; NPTS];
        pts[1..=NGL].copy_from_slice(&xi);
        pts[NPTS - 1] = 1.0;
        let bary = barycentric_weights(&pts);
        let bary_gl = barycentric_weights(&xi);
        let bary_gl: [f64; NGL] = bary_gl.try_into().expect("length");
        let mut cum = [[0.0; NGL]; NGL];
        for k in 0..NGL {
            for j in 0..NGL {
                let mut s = 0.0;
                for q in 0..NGL {
                    s += w[q] * lagrange(&xi, j, xi[k] * xi[q]);
                }
                cum[k][j] = xi[k] * s;
            }
        }
        RefElement {
            xi,
            w,
            pts,
            bary: bary.try_into().expect("length"),
            bary_gl,
            cum,
        }
    })
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            let p: f64 = (0..nodes.len())
                .filter(|&m| m != j)
                .map(|m| nodes[j] - nodes[m])
                .product();
            1.0 / p
        })
        .collect()
}

fn lagrange(nodes: &[f64], j: usize, t: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != j)
        .map(|(_, &xm)| (t - xm) / (nodes[j] - xm))
        .product()
}

/// Barycentric interpolation through `nodes` with weights `bw`.
pub fn bary_eval(nodes: &[f64], bw: &[f64], vals: &[f64], t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..nodes.len() {
        let d = t - nodes[j];
        if d == 0.0 {
            return vals[j];
        }
        let c = bw[j] / d;
        num += c * vals[j];
        den += c;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_rule_is_exact_to_degree_2n_minus_1() {
        for n in [1, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            for d in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} d={d} q={q}");
            }
        }
    }

    #[test]
    fn reference_cumulative_matrix_integrates_monomials() {
        let r = reference();
        for d in 0..NGL {
            let f: Vec<f64> = r.xi.iter().map(|x| x.powi(d as i32)).collect();
            for k in 0..NGL {
                let q: f64 = (0..NGL).map(|j| r.cum[k][j] * f[j]).sum();
                assert_relative_eq!(q, r.xi[k].powi(d as i32 + 1) / (d as f64 + 1.0), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn barycentric_reproduces_polynomials() {
        let r = reference();
        let f = |t: f64| 1.0 - 3.0 * t + t.powi(9);
        let vals: Vec<f64> = r.pts.iter().map(|&t| f(t)).collect();
        for t in [0.0, 0.013, 0.5, 0.77, 1.0] {
            assert_relative_eq!(bary_eval(&r.pts, &r.bary, &vals, t), f(t), epsilon = 1e-13);
        }
    }
}
