//! Least-squares fits of Gevrey-type envelopes `C (i!)^s / R^i`.

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GevreyFit {
    /// Prefactor of the envelope.
    pub c: f64,
    /// Geometric rate of the envelope.
    pub r: f64,
    /// Natural-log gap `log(value) - log(envelope)` per fitted index.
    pub residuals: Vec<(usize, f64)>,
}

impl GevreyFit {
    /// Largest ratio between a value and the envelope, either way.
    pub fn max_factor(&self) -> f64 {
        self.residuals
            .iter()
            .map(|(_, r)| r.abs())
            .fold(0.0, f64::max)
            .exp()
    }

    pub fn envelope(&self, i: usize, s: f64) -> f64 {
        self.c * (s * ln_factorial(i)).exp() / self.r.powi(i as i32)
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Fits `log|v_i| - s log(i!) = log C - i log R` over the nonzero entries.
pub fn fit_envelope(values: &[(usize, f64)], s: f64) -> Result<GevreyFit> {
    let logs: Vec<(usize, f64)> = values
        .iter()
        .filter(|(_, v)| v.is_finite() && *v != 0.0)
        .map(|&(i, v)| (i, v.abs().ln()))
        .collect();
    fit_envelope_log(&logs, s)
}

/// As `fit_envelope`, given `(i, log|v_i|)`.
pub fn fit_envelope_log(values: &[(usize, f64)], s: f64) -> Result<GevreyFit> {
    let pts: Vec<(f64, f64, usize)> = values
        .iter()
        .filter(|(_, l)| l.is_finite())
        .map(|&(i, l)| (i as f64, l - s * ln_factorial(i), i))
        .collect();
    if pts.len() < 2 {
        return Err(CoreError::FitDegenerate(format!(
            "{} nonzero values, at least two needed",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(CoreError::FitDegenerate("all values at one index".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let residuals = pts.iter().map(|p| (p.2, p.1 - (icpt + slope * p.0))).collect();
    Ok(GevreyFit {
        c: icpt.exp(),
        r: (-slope).exp(),
        residuals,
    })
}
