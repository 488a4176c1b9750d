//! Eigenpairs of `-e'' = lambda rho_hat e` with Robin ends, by Prüfer shooting.
//!
//! With `e = r sin(theta)`, `e' = r cos(theta)` the angle obeys
//! `theta' = cos^2 + lambda rho_hat sin^2`, which is increasing in `lambda`;
//! eigenvalues are the values where `theta(1)` hits the end angle modulo `pi`.
//! Each mesh cell is integrated in its reference coordinate, where the
//! weight enters through the bounded product `J rho_hat`.

use std::f64::consts::PI;

use rayon::prelude::*;

use flatness_model::gauss::{reference, NGL, NPTS};
use flatness_model::mesh::MeshFn;
use flatness_model::RobinPair;

use crate::canonical::CanonicalProblem;
use crate::error::{CoreError, Result};
use crate::ode::{integrate, OdeOptions};

pub const DEFAULT_N_EIG: usize = 40;
const BRACKET_LIMIT: f64 = 1.152_921_504_606_846_976e18; // 2^60
const BISECTION_RTOL: f64 = 1e-12;

/// End angles, each in `(-pi/2, pi/2]`, with `tan(theta) = -beta / alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruferAngles {
    pub theta0: f64,
    pub theta1: f64,
}

fn angle_of(bc: RobinPair) -> f64 {
    if bc.alpha == 0.0 {
        PI / 2.0
    } else {
        -(bc.beta / bc.alpha).atan()
    }
}

pub fn boundary_angles(bc0_hat: RobinPair, bc1_hat: RobinPair) -> PruferAngles {
    PruferAngles {
        theta0: angle_of(bc0_hat),
        theta1: angle_of(bc1_hat),
    }
}

impl PruferAngles {
    /// Start angle shifted into `[0, pi)`.
    fn start(&self) -> f64 {
        if self.theta0 < 0.0 {
            self.theta0 + PI
        } else if self.theta0 >= PI {
            self.theta0 - PI
        } else {
            self.theta0
        }
    }

    /// Target angle shifted into `(0, pi]`: with a start in `[0, pi)` the
    /// n-th eigenvalue is where `theta(1)` reaches `target + n pi`.
    fn target(&self) -> f64 {
        if self.theta1 <= 0.0 {
            self.theta1 + PI
        } else {
            self.theta1
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub n: usize,
    pub lambda: f64,
    pub e: MeshFn,
    pub e_prime: MeshFn,
    pub zeta: f64,
    /// `|alpha e + beta e'|` at both ends after normalization.
    pub bc_residual: [f64; 2],
}

impl EigenPair {
    pub fn e0(&self) -> f64 {
        self.e.first()
    }

    pub fn ep0(&self) -> f64 {
        self.e_prime.first()
    }

    pub fn e1(&self) -> f64 {
        self.e.last()
    }

    pub fn ep1(&self) -> f64 {
        self.e_prime.last()
    }

    /// `(-e, -zeta)`, the other admissible normalization.
    pub fn flipped(&self) -> Self {
        Self {
            e: self.e.map(|v| -v),
            e_prime: self.e_prime.map(|v| -v),
            zeta: -self.zeta,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    pub ode: OdeOptions,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
        }
    }
}

/// Prüfer shooting over the cells of a canonical problem.
pub struct Shooter<'a> {
    problem: &'a CanonicalProblem,
    angles: PruferAngles,
    opts: SpectralOptions,
}

impl<'a> Shooter<'a> {
    pub fn new(problem: &'a CanonicalProblem, opts: SpectralOptions) -> Self {
        Self {
            problem,
            angles: boundary_angles(problem.bc0_hat, problem.bc1_hat),
            opts,
        }
    }

    pub fn angles(&self) -> PruferAngles {
        self.angles
    }

    fn rhs(&self, c: usize, lambda: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
        let cell = self.problem.mesh.cells()[c];
        let jrho = &self.problem.jrho;
        move |xi, y| {
            let j = cell.jacobian(xi);
            let jr = jrho.eval_xi(c, xi);
            let (s, co) = y[0].sin_cos();
            let th = j * co * co + lambda * jr * s * s;
            let lr = (j - lambda * jr) * co * s;
            [th, lr]
        }
    }

    /// `theta(1, lambda)` starting from the shifted left angle.
    pub fn shoot(&self, lambda: f64) -> Result<f64> {
        let mut theta = self.angles.start();
        let mut h = 0.25;
        for c in 0..self.problem.mesh.len() {
            let f = self.rhs(c, lambda);
            let (y, last) = integrate(|xi, y: &[f64; 1]| [f(xi, &[y[0], 0.0])[0]], 0.0, 1.0, [theta], h, &self.opts.ode)
                .ok_or(CoreError::IntegrationFailure {
                    lambda,
                    at: self.problem.mesh.cells()[c].lo,
                })?;
            theta = y[0];
            h = last;
        }
        Ok(theta)
    }

    /// Largest `lambda <= -1` found by doubling with `theta(1) < target`.
    fn lower_bracket(&self, n: usize) -> Result<f64> {
        let target = self.angles.target();
        let mut lam = -1.0;
        loop {
            if self.shoot(lam)? < target {
                return Ok(lam);
            }
            lam *= 2.0;
            if -lam > BRACKET_LIMIT {
                return Err(CoreError::BracketFailure {
                    n,
                    magnitude: BRACKET_LIMIT,
                });
            }
        }
    }

    /// Eigenvalue of index `n`.
    pub fn eigenvalue(&self, n: usize) -> Result<f64> {
        let goal = self.angles.target() + n as f64 * PI;
        let mut lo = self.lower_bracket(n)?;
        let mut step = 1.0;
        let mut hi;
        // upward doubling; lo keeps the largest point known to be below
        loop {
            let cand = lo.max(0.0) + step;
            let th = self.shoot(cand)?;
            if th > goal {
                hi = cand;
                break;
            }
            lo = lo.max(cand);
            step *= 2.0;
            if step > BRACKET_LIMIT {
                return Err(CoreError::BracketFailure {
                    n,
                    magnitude: BRACKET_LIMIT,
                });
            }
        }
        while hi - lo > BISECTION_RTOL * hi.abs().max(lo.abs()).max(1.0) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.shoot(mid)? >= goal {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Joint `(theta, log r)` integration at `lambda`, sampled at the stored
    /// points of every cell and normalized in `L^2_rho_hat`.
    pub fn eigenpair(&self, n: usize, lambda: f64) -> Result<EigenPair> {
        let r = reference();
        let mesh = self.problem.mesh.clone();
        let mut theta = self.angles.start();
        let mut logr = 0.0;
        let mut h = 0.05;
        let mut th_vals = Vec::with_capacity(mesh.len());
        let mut lr_vals = Vec::with_capacity(mesh.len());
        for c in 0..mesh.len() {
            let f = self.rhs(c, lambda);
            let mut tv = [0.0; NPTS];
            let mut lv = [0.0; NPTS];
            tv[0] = theta;
            lv[0] = logr;
            for k in 1..NPTS {
                let (y, last) = integrate(&f, r.pts[k - 1], r.pts[k], [theta, logr], h, &self.opts.ode).ok_or(
                    CoreError::IntegrationFailure {
                        lambda,
                        at: mesh.cells()[c].point(r.pts[k - 1]),
                    },
                )?;
                theta = y[0];
                logr = y[1];
                h = last;
                tv[k] = theta;
                lv[k] = logr;
            }
            th_vals.push(tv);
            lr_vals.push(lv);
        }
        // shift log r so the largest amplitude is 1 before exponentiating
        let lmax = lr_vals.iter().flat_map(|v| v.iter()).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let build = |trig: fn(f64) -> f64| {
            let vals = th_vals
                .iter()
                .zip(&lr_vals)
                .map(|(tv, lv)| {
                    let mut out = [0.0; NPTS];
                    for k in 0..NPTS {
                        out[k] = (lv[k] - lmax).exp() * trig(tv[k]);
                    }
                    out
                })
                .collect();
            MeshFn::new(mesh.clone(), vals)
        };
        let e = build(f64::sin);
        let ep = build(f64::cos);
        let norm2 = self.problem.weighted_integral(|c, k| e.gl(c, k).powi(2));
        let scale = 1.0 / norm2.sqrt();
        let e = e.map(|v| v * scale);
        let ep = ep.map(|v| v * scale);
        let bc0 = self.problem.bc0_hat;
        let bc1 = self.problem.bc1_hat;
        let zeta = bc0.beta * e.first() - bc0.alpha * ep.first();
        let bc_residual = [
            (bc0.alpha * e.first() + bc0.beta * ep.first()).abs(),
            (bc1.alpha * e.last() + bc1.beta * ep.last()).abs(),
        ];
        Ok(EigenPair {
            n,
            lambda,
            e,
            e_prime: ep,
            zeta,
            bc_residual,
        })
    }
}

/// Eigenpairs `0..n_eig`, computed in parallel over the index.
pub fn eigenpairs(problem: &CanonicalProblem, n_eig: usize, opts: SpectralOptions) -> Result<Vec<EigenPair>> {
    let shooter = Shooter::new(problem, opts);
    (0..n_eig)
        .into_par_iter()
        .map(|n| {
            let lam = shooter.eigenvalue(n)?;
            shooter.eigenpair(n, lam)
        })
        .collect()
}

/// `int e_m e_n rho_hat` over the GL nodes.
pub fn inner_product(problem: &CanonicalProblem, a: &MeshFn, b: &MeshFn) -> f64 {
    problem.weighted_integral(|c, k| a.gl(c, k) * b.gl(c, k))
}

/// GL-node values of `e` on cell `c`.
pub fn gl_values(f: &MeshFn, c: usize) -> [f64; NGL] {
    let mut out = [0.0; NGL];
    out.copy_from_slice(&f.values()[c][1..=NGL]);
    out
}
