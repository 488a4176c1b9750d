use flatness_core::canonical::ReductionOptions;
use flatness_core::extensions::{
    inverse_square_reduce, radial_reduce, solve_inverse_square, RadialSpec, SingularPotentialSpec,
};
use flatness_core::spectral::{eigenpairs, SpectralOptions};
use flatness_core::synthesis::SynthesisOptions;
use flatness_model::{Expr, RobinPair, Smooth};

fn potential(mu: f64, bc1: RobinPair, u0: &str) -> SingularPotentialSpec {
    SingularPotentialSpec {
        mu,
        bc1,
        t_final: 0.4,
        tau: 0.2,
        s: 1.6,
        u0: Smooth::Expr(Expr::parse(u0).unwrap()),
    }
}

fn opts() -> SynthesisOptions {
    SynthesisOptions {
        n_eig: 20,
        n_gen: 40,
        control_steps: 400,
        ..SynthesisOptions::default()
    }
}

#[test]
fn critical_spectrum_is_squared_bessel_zeros() {
    // sqrt(x) J_0(j x) solves v'' + v / (4 x^2) = -j^2 v with v(0) = 0
    let zeros = [
        2.404_825_557_695_773,
        5.520_078_110_286_311,
        8.653_727_912_911_013,
        11.791_534_439_014_281,
        14.930_917_708_487_787,
    ];
    let cp = inverse_square_reduce(&potential(0.25, RobinPair::dirichlet(), "x"), &ReductionOptions::default()).unwrap();
    let pairs = eigenpairs(&cp, zeros.len(), SpectralOptions::default()).unwrap();
    for (p, j) in pairs.iter().zip(zeros) {
        assert!((p.lambda - j * j).abs() <= 1e-8 * j * j, "{} vs {}", p.lambda, j * j);
    }
}

#[test]
fn three_dimensional_ball_reduces_to_the_heat_equation() {
    let spec = RadialSpec {
        dimension: 3,
        bc1: RobinPair::dirichlet(),
        t_final: 0.4,
        tau: 0.2,
        s: 1.6,
        u0: Smooth::Expr(Expr::parse("cos(pi*x/2)").unwrap()),
    };
    let ps = radial_reduce(&spec).unwrap();
    let cp = inverse_square_reduce(&ps, &ReductionOptions::default()).unwrap();
    let pairs = eigenpairs(&cp, 6, SpectralOptions::default()).unwrap();
    for (n, p) in pairs.iter().enumerate() {
        let exact = ((n + 1) as f64 * std::f64::consts::PI).powi(2);
        assert!((p.lambda - exact).abs() <= 1e-8 * exact);
    }

    // u_r = (r u~_r - u~) / r^2 tends to zero at the centre
    let sol = solve_inverse_square(&ps, &opts()).unwrap();
    let ur = |r: f64| {
        let (p, _) = sol.solution.canonical.profile(&[r], 0.3).unwrap();
        let (u, du) = p[0];
        (r * du - u) / (r * r)
    };
    let (a, b, c) = (ur(0.1).abs(), ur(0.01).abs(), ur(0.001).abs());
    assert!(a > 0.0 && b < a && c < b, "{a} {b} {c}");
    assert!(c < 0.05 * a, "{a} {c}");
}

#[test]
fn subcritical_weighted_flux_stays_bounded() {
    let ps = potential(3.0 / 16.0, RobinPair::new(1.0, 1.0).unwrap(), "sin(pi*x)");
    let sol = solve_inverse_square(&ps, &opts()).unwrap();
    let (_, r2) = ps.roots();
    let r = r2 + 0.05;
    let vals: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
        .iter()
        .map(|&x| sol.weighted_flux(x, 0.3, r).unwrap().abs())
        .collect();
    assert!(vals.iter().all(|v| v.is_finite()));
    for w in vals.windows(2) {
        assert!(w[1] <= w[0] * 1.01, "{vals:?}");
    }
}

#[test]
fn critical_robin_control_vanishes_before_the_switch() {
    let ps = potential(0.25, RobinPair::new(1.0, 1.0).unwrap(), "sin(pi*x)");
    let sol = solve_inverse_square(&ps, &opts()).unwrap();
    for (t, h) in sol.control.times.iter().zip(&sol.control.values) {
        if *t <= ps.tau {
            assert_eq!(*h, 0.0);
        }
    }
    assert!(sol.control.values.iter().any(|h| *h != 0.0));
    assert!(sol.solution.report.final_norm_series < 1e-8);
}
