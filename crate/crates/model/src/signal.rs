//! Sampled controls and trajectories exchanged between synthesis and simulation.

#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn bracket(grid: &[f64], t: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || t <= grid[0] {
        return (0, 0.0);
    }
    if t >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let j = grid.partition_point(|&g| g <= t) - 1;
    let w = (t - grid[j]) / (grid[j + 1] - grid[j]);
    (j, w)
}

impl ControlSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len());
        assert!(!times.is_empty());
        Self { times, values }
    }

    pub fn zero(times: Vec<f64>) -> Self {
        let values = vec![0.0; times.len()];
        Self { times, values }
    }

    /// Piecewise-linear interpolation, constant extension outside the grid.
    pub fn at(&self, t: f64) -> f64 {
        if self.times.len() == 1 {
            return self.values[0];
        }
        let (j, w) = bracket(&self.times, t);
        (1.0 - w) * self.values[j] + w * self.values[j + 1]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// Distributed source `f(x, t)` sampled on a tensor grid, `values[t][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributedControl {
    pub x_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub support: (f64, f64),
}

impl DistributedControl {
    /// Bilinear interpolation; zero outside the declared support.
    pub fn at(&self, x: f64, t: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            return 0.0;
        }
        let (i, wx) = bracket(&self.x_grid, x);
        let (j, wt) = bracket(&self.t_grid, t);
        let row = |j: usize| {
            let r = &self.values[j];
            if r.len() == 1 {
                r[0]
            } else {
                (1.0 - wx) * r[i] + wx * r[i + 1]
            }
        };
        if self.t_grid.len() == 1 {
            return row(0);
        }
        (1.0 - wt) * row(j) + wt * row(j + 1)
    }

    /// Largest |f| at grid points outside the support.
    pub fn max_outside_support(&self) -> f64 {
        let mut m = 0.0f64;
        for row in &self.values {
            for (x, v) in self.x_grid.iter().zip(row) {
                if *x < self.support.0 || *x > self.support.1 {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Eigen,
    GenFun,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::Eigen => "eigen",
            Regime::GenFun => "genfun",
        }
    }
}

/// `values[t][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub regimes: Vec<Regime>,
}

impl Trajectory {
    pub fn at_time_index(&self, j: usize) -> &[f64] {
        &self.values[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_interpolates_linearly() {
        let h = ControlSignal::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]);
        assert_eq!(h.at(0.5), 1.0);
        assert_eq!(h.at(1.5), 1.0);
        assert_eq!(h.at(3.0), 0.0);
        assert_eq!(h.scaled(2.0).at(1.0), 4.0);
    }

    #[test]
    fn distributed_control_vanishes_off_support() {
        let f = DistributedControl {
            x_grid: vec![0.0, 0.5, 1.0],
            t_grid: vec![0.0, 1.0],
            values: vec![vec![0.0, 1.0, 0.0], vec![0.0, 3.0, 0.0]],
            support: (0.25, 0.75),
        };
        assert_eq!(f.at(0.5, 0.5), 2.0);
        assert_eq!(f.at(0.1, 0.5), 0.0);
        assert_eq!(f.max_outside_support(), 0.0);
    }
}
