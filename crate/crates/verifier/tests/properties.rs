use std::fs;
use std::path::Path;

use flatness_model::{CoefficientFn, ControlSignal, Expr, ProblemSpec, RobinPair, Smooth};
use flatness_verifier::{cross_check, simulate_forward, Control, Scheme, SimGrid, SimResult};
use proptest::prelude::*;

fn heat(u0: &str, t_final: f64) -> ProblemSpec {
    let mut s = ProblemSpec::heat(
        RobinPair::neumann(),
        RobinPair::neumann(),
        Smooth::Expr(Expr::parse(u0).unwrap()),
    );
    s.t_final = t_final;
    s.tau = 0.5 * t_final;
    s
}

fn run(spec: &ProblemSpec, grid: &SimGrid) -> SimResult {
    simulate_forward(spec, Control::None, grid, &[]).unwrap()
}

#[test]
fn simulator_does_not_depend_on_the_synthesis_crate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let manifest = fs::read_to_string(root.join("Cargo.toml")).unwrap();
    assert!(!manifest.contains("flatness-core"), "manifest pulls in the synthesis crate");
    for entry in fs::read_dir(root.join("src")).unwrap() {
        let path = entry.unwrap().path();
        let src = fs::read_to_string(&path).unwrap();
        assert!(!src.contains("flatness_core"), "{} refers to the synthesis crate", path.display());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn max_modulus_does_not_grow_without_sources(
        c0 in 0.0f64..5.0,
        c1 in 0.0f64..5.0,
        a1 in 0.0f64..3.0,
        k in 1u32..6,
        shift in -1.0f64..1.0,
    ) {
        let mut s = heat(&format!("{shift} + cos({k}*pi*x) + 0.3*sin(7*x)"), 0.05);
        s.a = CoefficientFn::from_expr(&format!("1 + {a1}*x*x")).unwrap();
        s.c = CoefficientFn::from_expr(&format!("-{c0} - {c1}*x")).unwrap();
        s.bc1 = RobinPair::new(1.0, 0.5).unwrap();
        let g = SimGrid::uniform(120, s.t_final, 100, Scheme::ImplicitEuler).unwrap();
        let r = run(&s, &g);
        for w in r.max_abs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }
}

/// Final ratios on three nested grids.
fn ladder(spec: &ProblemSpec, cells: usize, steps: usize, scheme: Scheme) -> [f64; 3] {
    let g0 = SimGrid::for_spec(spec, cells, steps, scheme).unwrap();
    let g1 = g0.refined();
    let g2 = g1.refined();
    [run(spec, &g0).final_norm_ratio, run(spec, &g1).final_norm_ratio, run(spec, &g2).final_norm_ratio]
}

#[test]
fn halving_the_steps_is_within_the_error_estimate() {
    let exact = (-std::f64::consts::PI.powi(2) * 0.1).exp();
    let [r0, r1, r2] = ladder(&heat("cos(pi*x)", 0.1), 50, 50, Scheme::Trapezoidal);
    let (e0, e1) = ((r0 - exact).abs(), (r1 - exact).abs());
    assert!((r1 - r0).abs() < 3.0 * e0, "{r0} {r1} exact {exact}");
    assert!((r2 - r1).abs() < 3.0 * e1);
    // second order
    assert!(e0 / e1 > 3.0 && e0 / e1 < 5.0, "{}", e0 / e1);

    // degenerate diffusion has no closed form: estimate the error of the middle
    // level from the first difference of the ladder
    let mut s = heat("cos(pi*x)", 0.1);
    s.a = CoefficientFn::power_law(0.5, Smooth::Expr(Expr::constant(1.0)));
    s.p = 2.0;
    s.s = 1.4;
    let [r0, r1, r2] = ladder(&s, 100, 100, Scheme::Trapezoidal);
    let est = (r1 - r0).abs() / 3.0;
    assert!((r2 - r1).abs() < 3.0 * est, "{r0} {r1} {r2}");
}

#[test]
fn euler_and_trapezoidal_agree_within_their_estimates() {
    let mut s = heat("1 + x*x*(1 - x)", 0.2);
    s.a = CoefficientFn::piecewise_constant(&[0.5], &[1.0, 3.0]).unwrap();
    s.bc0 = RobinPair::new(1.0, 1.0).unwrap();
    let [e0, e1, _] = ladder(&s, 100, 200, Scheme::ImplicitEuler);
    let [t0, t1, _] = ladder(&s, 100, 200, Scheme::Trapezoidal);
    // first order in time for Euler, second order for the trapezoidal rule
    let est_e = (e1 - e0).abs();
    let est_t = (t1 - t0).abs() / 3.0;
    assert!((e1 - t1).abs() <= 2.0 * (est_e + est_t), "{e1} {t1} {est_e} {est_t}");
}

#[test]
fn zero_state_matches_zero_trajectory() {
    let s = heat("0", 0.1);
    let g = SimGrid::uniform(40, 0.1, 40, Scheme::Trapezoidal).unwrap();
    let times: Vec<f64> = (0..=10).map(|j| 0.01 * j as f64).collect();
    let h = ControlSignal::zero(times.clone());
    let r = simulate_forward(&s, Control::Boundary(&h), &g, &times).unwrap();
    let traj = flatness_model::Trajectory {
        x_grid: vec![0.0, 0.5, 1.0],
        t_grid: times.clone(),
        values: vec![vec![0.0; 3]; times.len()],
        regimes: vec![flatness_model::Regime::Eigen; times.len()],
    };
    let d = cross_check(&traj, &r, 0.0);
    assert_eq!(d.max_dev, 0.0);
    assert_eq!(d.l2_dev, 0.0);
}
