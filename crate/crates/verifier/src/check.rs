//! Comparison of a series trajectory with a simulation.

use flatness_model::Trajectory;

use crate::sim::SimResult;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Deviation {
    pub max_dev: f64,
    /// Root mean square over the compared samples.
    pub l2_dev: f64,
    /// Largest `|u|` of the trajectory over the compared samples.
    pub scale: f64,
    pub samples: usize,
    pub final_norm_ratio: f64,
}

/// Deviation over trajectory times `t >= t_min` that the simulation recorded.
pub fn cross_check(trajectory: &Trajectory, sim: &SimResult, t_min: f64) -> Deviation {
    let tol = 1e-12 * trajectory.t_grid.last().copied().unwrap_or(1.0).abs().max(1.0);
    let mut max_dev = 0.0f64;
    let mut sq = 0.0;
    let mut scale = 0.0f64;
    let mut samples = 0;
    for (j, &t) in trajectory.t_grid.iter().enumerate() {
        if t < t_min {
            continue;
        }
        let Some(k) = sim.times.iter().position(|&s| (s - t).abs() <= tol) else {
            continue;
        };
        for (x, u) in trajectory.x_grid.iter().zip(&trajectory.values[j]) {
            let d = (sim.value_at(k, *x) - u).abs();
            max_dev = max_dev.max(d);
            scale = scale.max(u.abs());
            sq += d * d;
            samples += 1;
        }
    }
    Deviation {
        max_dev,
        l2_dev: if samples > 0 { (sq / samples as f64).sqrt() } else { 0.0 },
        scale,
        samples,
        final_norm_ratio: sim.final_norm_ratio,
    }
}
