//! Result records and their on-disk formats.
//!
//! A run produces one [`ResultRecord`]: a list of named metrics (each
//! optionally carrying a standard error, a target and a tolerance), the
//! regression fits behind them, and any series worth plotting. Three
//! renderings exist:
//!
//! * `results.csv` — one metric per row, fixed columns
//!   `name,value,std_error,target,tolerance,status`, floats always in
//!   scientific notation with twelve fractional digits. This file is
//!   **byte-deterministic** for a fixed seed and config: it contains no
//!   wall-clock time, no host names, no thread counts.
//! * `results.json` — the full record including the resolved
//!   configuration, fit diagnostics and timing (the JSON is where
//!   non-deterministic timing lives, keeping the CSV contract clean).
//! * `plotdata/<series>.csv` — two-column `x,y` files for plotting.
//!
//! Rendering is exposed as string-returning functions so callers can
//! compare outputs byte-for-byte without touching the filesystem.

use serde::Serialize;

use crate::error::Result;
use crate::mc::{MCEstimate, RateFit};

/// One scored (or informational) quantity.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// `None` marks an informational row (status column reads `info`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl MetricRow {
    /// Informational row: reported, never scored.
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        MetricRow {
            name: name.into(),
            value,
            std_error: None,
            target: None,
            tolerance: None,
            pass: None,
        }
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    /// Scored row: passes iff |value - target| <= tolerance.
    pub fn scored(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        MetricRow {
            name: name.into(),
            value,
            std_error: None,
            target: Some(target),
            tolerance: Some(tolerance),
            pass: Some(value.is_finite() && (value - target).abs() <= tolerance),
        }
    }

    /// Scored row: passes iff value <= limit (one-sided).
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        MetricRow {
            name: name.into(),
            value,
            std_error: None,
            target: Some(limit),
            tolerance: None,
            pass: Some(value.is_finite() && value <= limit),
        }
    }

    /// Scored row: passes iff value >= floor (one-sided; negative controls).
    pub fn at_least(name: impl Into<String>, value: f64, floor: f64) -> Self {
        MetricRow {
            name: name.into(),
            value,
            std_error: None,
            target: Some(floor),
            tolerance: None,
            pass: Some(value.is_finite() && value >= floor),
        }
    }

    /// Scored row from a Monte Carlo estimate against a known target:
    /// passes iff |value - target| <= z_max * se + slack.
    pub fn z_scored(
        name: impl Into<String>,
        est: &MCEstimate,
        target: f64,
        z_max: f64,
        slack: f64,
    ) -> Self {
        let tol = z_max * est.std_error + slack;
        MetricRow {
            name: name.into(),
            value: est.value,
            std_error: Some(est.std_error),
            target: Some(target),
            tolerance: Some(tol),
            pass: Some(est.value.is_finite() && (est.value - target).abs() <= tol),
        }
    }

    /// Boolean check encoded as a metric (value 1 = pass, 0 = fail).
    pub fn check(name: impl Into<String>, ok: bool) -> Self {
        MetricRow {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            std_error: None,
            target: Some(1.0),
            tolerance: Some(0.0),
            pass: Some(ok),
        }
    }
}

/// Serializable summary of a log-log regression.
#[derive(Debug, Clone, Serialize)]
pub struct FitRow {
    pub name: String,
    pub slope: f64,
    pub slope_ci: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub n_used: usize,
    pub n_total: usize,
}

impl FitRow {
    pub fn from_fit(name: impl Into<String>, fit: &RateFit) -> Self {
        FitRow {
            name: name.into(),
            slope: fit.slope,
            slope_ci: fit.slope_ci,
            intercept: fit.intercept,
            residual_rms: fit.residual_rms,
            n_used: fit.used.iter().filter(|&&u| u).count(),
            n_total: fit.used.len(),
        }
    }
}

/// A named two-column series destined for `plotdata/<name>.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

/// Everything a run reports.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub config_hash: String,
    pub input_hash: String,
    pub seed: u64,
    /// Wall-clock seconds; lives only in the JSON rendering.
    pub wall_clock_s: f64,
    pub metrics: Vec<MetricRow>,
    pub fits: Vec<FitRow>,
    pub series: Vec<Series>,
    /// Canonical resolved configuration the run actually used.
    pub resolved_config: String,
}

impl ResultRecord {
    pub fn new(experiment: impl Into<String>) -> Self {
        ResultRecord {
            experiment: experiment.into(),
            config_hash: String::new(),
            input_hash: String::new(),
            seed: 0,
            wall_clock_s: 0.0,
            metrics: Vec::new(),
            fits: Vec::new(),
            series: Vec::new(),
            resolved_config: String::new(),
        }
    }

    /// All scored metrics passed (informational rows do not vote).
    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass.unwrap_or(true))
    }

    pub fn n_failed(&self) -> usize {
        self.metrics.iter().filter(|m| m.pass == Some(false)).count()
    }

    /// The deterministic CSV rendering (see module docs for the contract).
    pub fn render_csv(&self) -> String {
        let mut out = String::from("name,value,std_error,target,tolerance,status\n");
        for m in &self.metrics {
            let status = match m.pass {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "info",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.name,
                fmt_float(m.value),
                m.std_error.map(fmt_float).unwrap_or_default(),
                m.target.map(fmt_float).unwrap_or_default(),
                m.tolerance.map(fmt_float).unwrap_or_default(),
                status
            ));
        }
        out
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    /// Write the requested formats under `dir`; creates directories.
    pub fn write(&self, dir: &std::path::Path, formats: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for f in formats {
            match f.as_str() {
                "csv" => std::fs::write(dir.join("results.csv"), self.render_csv())?,
                "json" => std::fs::write(dir.join("results.json"), self.render_json())?,
                "plotdata" => {
                    let pd = dir.join("plotdata");
                    std::fs::create_dir_all(&pd)?;
                    for s in &self.series {
                        std::fs::write(pd.join(format!("{}.csv", s.name)), render_series(s))?;
                    }
                }
                other => {
                    return Err(crate::error::Error::config(format!(
                        "unknown output format '{other}'"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Fixed float formatting for CSV cells: scientific, twelve fractional
/// digits, so equal doubles render to equal bytes on every platform.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.12e}")
    }
}

fn render_series(s: &Series) -> String {
    let mut out = format!("{},{}\n", s.x_label, s.y_label);
    for (x, y) in &s.points {
        out.push_str(&format!("{},{}\n", fmt_float(*x), fmt_float(*y)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering_is_fixed_format() {
        let mut rec = ResultRecord::new("demo");
        rec.metrics.push(MetricRow::info("plain", 0.5));
        rec.metrics
            .push(MetricRow::scored("hit", 1.0, 1.0, 0.1).with_se(0.01));
        rec.metrics.push(MetricRow::at_most("small", 2.0, 1.0));
        let csv = rec.render_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "name,value,std_error,target,tolerance,status");
        assert_eq!(lines[1], "plain,5.000000000000e-1,,,,info");
        assert_eq!(
            lines[2],
            "hit,1.000000000000e0,1.000000000000e-2,1.000000000000e0,1.000000000000e-1,pass"
        );
        assert_eq!(lines[3], "small,2.000000000000e0,,1.000000000000e0,,fail");
        assert!(!rec.passed());
        assert_eq!(rec.n_failed(), 1);
    }

    #[test]
    fn json_round_trips_and_holds_the_resolved_config() {
        let mut rec = ResultRecord::new("demo");
        rec.resolved_config = "[experiment]\nkind = \"schvar\"\n".to_string();
        rec.metrics.push(MetricRow::check("flag", true));
        let json = rec.render_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["experiment"], "demo");
        assert!(v["resolved_config"].as_str().unwrap().contains("schvar"));
        assert_eq!(v["metrics"][0]["value"], 1.0);
    }

    #[test]
    fn files_land_where_promised() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = ResultRecord::new("demo");
        rec.metrics.push(MetricRow::info("x", 1.0));
        rec.series.push(Series {
            name: "curve".to_string(),
            x_label: "t".to_string(),
            y_label: "v".to_string(),
            points: vec![(0.1, 1.0), (0.2, 0.5)],
        });
        let formats: Vec<String> = ["csv", "json", "plotdata"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        rec.write(dir.path(), &formats).unwrap();
        assert!(dir.path().join("results.csv").is_file());
        assert!(dir.path().join("results.json").is_file());
        let series = std::fs::read_to_string(dir.path().join("plotdata/curve.csv")).unwrap();
        assert!(series.starts_with("t,v\n1.000000000000e-1,"));
    }
}
