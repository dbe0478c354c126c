//! Monte Carlo bookkeeping: estimates with standard errors, and the
//! log-log regression used by the decay-rate experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Monte Carlo estimate together with everything needed to reproduce
/// and to judge it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    /// Standard error of the mean, computed from the outer-sample
    /// variance; for nested estimators the inner noise is inside the
    /// outer samples, so it inflates this number and never deflates it.
    pub std_error: f64,
    pub n_outer: u64,
    /// 0 for single-level estimators.
    pub n_inner: u64,
    pub seed: u64,
    pub t: f64,
}

impl MCEstimate {
    pub fn exact(value: f64, t: f64, seed: u64) -> Self {
        MCEstimate {
            value,
            std_error: 0.0,
            n_outer: 0,
            n_inner: 0,
            seed,
            t,
        }
    }

    /// |self - other| in units of the combined standard error.
    pub fn z_gap(&self, other: &MCEstimate) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        if se == 0.0 {
            if self.value == other.value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - other.value).abs() / se
        }
    }

    /// |self - reference| in units of this estimate's own standard error.
    pub fn z_against(&self, reference: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.value == reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - reference).abs() / self.std_error
        }
    }
}

/// Sample mean and standard error of the mean (ddof = 1). Non-finite
/// samples are counted and reported as an estimator error; an empty batch
/// is one too.
pub fn mean_and_se(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::estimator("empty sample batch", 0));
    }
    let n_bad = samples.iter().filter(|s| !s.is_finite()).count();
    if n_bad > 0 {
        return Err(Error::estimator("non-finite samples in batch", n_bad));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Result of a decay-rate regression on a log-log grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Which points entered the regression; the rest were dropped by the
    /// relative-noise rule.
    pub used: Vec<bool>,
    pub slope: f64,
    /// Half-width of a 95% confidence interval for the slope
    /// (normal approximation).
    pub slope_ci: f64,
    pub intercept: f64,
    /// Root-mean-square of the log-residuals over the used points.
    pub residual_rms: f64,
}

/// Least squares for log(value) = slope * log(t) + intercept.
///
/// Points are dropped when the value is non-finite or <= 0 (no log), or
/// when std_error / |value| exceeds `rel_noise_tol` (too noisy to trust).
/// Fewer than 4 surviving points is a fit error.
pub fn fit_loglog(
    times: &[f64],
    values: &[f64],
    std_errors: &[f64],
    rel_noise_tol: f64,
) -> Result<RateFit> {
    if times.len() != values.len() || times.len() != std_errors.len() {
        return Err(Error::argument("fit_loglog: length mismatch".to_string()));
    }
    let mut used = vec![false; times.len()];
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for i in 0..times.len() {
        let (t, v, se) = (times[i], values[i], std_errors[i]);
        if !(t > 0.0) || !v.is_finite() || v <= 0.0 {
            continue;
        }
        if se.is_finite() && v.abs() > 0.0 && se / v.abs() > rel_noise_tol {
            continue;
        }
        used[i] = true;
        pts.push((t.ln(), v.ln()));
    }
    let m = pts.len();
    if m < 4 {
        return Err(Error::Fit(format!(
            "only {m} usable points (need >= 4); noisy or non-positive data"
        )));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if sxx <= 0.0 {
        return Err(Error::Fit("degenerate time grid".to_string()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum();
    let (se_slope, residual_rms) = if m > 2 {
        let sigma2 = rss / (m - 2) as f64;
        ((sigma2 / sxx).sqrt(), (rss / m as f64).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(RateFit {
        times: times.to_vec(),
        values: values.to_vec(),
        std_errors: std_errors.to_vec(),
        used,
        slope,
        slope_ci: 1.96 * se_slope,
        intercept,
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_se_basics() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(m, 2.5);
        // sample var = 5/3, se = sqrt(5/12)
        assert_relative_eq!(se, (5.0_f64 / 12.0).sqrt(), max_relative = 1e-12);
        assert!(mean_and_se(&[]).is_err());
        match mean_and_se(&[1.0, f64::NAN, f64::INFINITY]) {
            Err(Error::Estimator { n_bad, .. }) => assert_eq!(n_bad, 2),
            other => panic!("expected estimator error, got {other:?}"),
        }
    }

    #[test]
    fn loglog_fit_recovers_pure_power_law() {
        let times: Vec<f64> = (0..8).map(|i| 1e-3 * 2f64.powi(i)).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(-0.5)).collect();
        let ses = vec![0.0; times.len()];
        let fit = fit_loglog(&times, &values, &ses, 0.2).unwrap();
        assert_relative_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-12);
        assert!(fit.residual_rms < 1e-12);
        assert!(fit.used.iter().all(|&u| u));
    }

    #[test]
    fn loglog_fit_drops_noisy_points_and_errors_when_starved() {
        let times = vec![0.001, 0.002, 0.004, 0.008, 0.016];
        let values = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        let mut ses = vec![0.0; 5];
        ses[2] = 0.5; // 50% relative noise: dropped
        let fit = fit_loglog(&times, &values, &ses, 0.2).unwrap();
        assert!(!fit.used[2]);
        assert_relative_eq!(fit.slope, 0.0, epsilon = 1e-12);

        let ses = vec![0.5; 5];
        assert!(fit_loglog(&times, &values, &ses, 0.2).is_err());
    }

    #[test]
    fn z_gap_handles_exact_estimates() {
        let a = MCEstimate::exact(1.0, 0.0, 0);
        let b = MCEstimate::exact(1.0, 0.0, 0);
        assert_eq!(a.z_gap(&b), 0.0);
        let c = MCEstimate::exact(2.0, 0.0, 0);
        assert_eq!(a.z_gap(&c), f64::INFINITY);
    }
}
