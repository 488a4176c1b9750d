//! CSV artifacts and the JSON report.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use flatness_model::{Check, ControlSignal, DistributedControl, Trajectory};
use serde::Serialize;

/// Fixed float format: 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV with `header` and rows of numbers.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

pub fn write_control(path: &Path, h: &ControlSignal) -> io::Result<()> {
    write_csv(path, &["t", "h"], h.times.iter().zip(&h.values).map(|(t, v)| vec![*t, *v]))
}

/// Long format `(x, t, u)`.
pub fn write_trajectory(path: &Path, tr: &Trajectory) -> io::Result<()> {
    write_csv(
        path,
        &["x", "t", "u"],
        tr.t_grid
            .iter()
            .zip(&tr.values)
            .flat_map(|(t, row)| tr.x_grid.iter().zip(row).map(move |(x, u)| vec![*x, *t, *u])),
    )
}

/// Long format `(x, t, f)`.
pub fn write_distributed(path: &Path, f: &DistributedControl) -> io::Result<()> {
    write_csv(
        path,
        &["x", "t", "f"],
        f.t_grid
            .iter()
            .zip(&f.values)
            .flat_map(|(t, row)| f.x_grid.iter().zip(row).map(move |(x, v)| vec![*x, *t, *v])),
    )
}

/// Run report; the keys up to `error` are always present (null when not computed).
#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub matching_error: Option<f64>,
    pub trunc_eig: Option<f64>,
    pub trunc_gen: Option<f64>,
    #[serde(rename = "gevrey_M")]
    pub gevrey_m: Option<f64>,
    #[serde(rename = "gevrey_R")]
    pub gevrey_r: Option<f64>,
    pub final_norm_series: Option<f64>,
    pub max_dev: Option<f64>,
    pub l2_dev: Option<f64>,
    pub final_norm_ratio: Option<f64>,
    pub support: Option<[f64; 2]>,
    pub status: String,
    pub stage: Option<String>,
    pub error: Option<String>,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissible: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outside_omega: Option<f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub runtime_s: f64,
}

impl Report {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join("report.json"), text + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(-2.0), "-2.0000000000000000e0");
        let x: f64 = fmt(std::f64::consts::PI).parse().unwrap();
        assert_eq!(x, std::f64::consts::PI);
    }

    #[test]
    fn report_has_fixed_keys() {
        let r = Report {
            status: "ok".into(),
            ..Report::default()
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in [
            "matching_error",
            "trunc_eig",
            "trunc_gen",
            "gevrey_M",
            "gevrey_R",
            "final_norm_series",
            "max_dev",
            "l2_dev",
            "final_norm_ratio",
            "support",
            "status",
            "stage",
            "error",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
