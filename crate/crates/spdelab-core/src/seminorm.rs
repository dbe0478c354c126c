//! Empirical Hölder and Zygmund seminorms.
//!
//! A seminorm probe is a deterministic design: a finite set of base points,
//! a set of unit directions in the weighted norm, and a decreasing ladder of
//! dyadic scales. Difference quotients are maximised over the design at each
//! scale separately so callers can check that the quotients have stabilised
//! across scales (the signature of a genuine Hölder exponent) rather than
//! still growing (exponent misdeclared).

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SpectralModel;
use crate::rng::substream;

#[derive(Debug, Clone)]
pub struct SeminormProbe {
    /// Base points of the difference quotients.
    pub points: Vec<Vec<f64>>,
    /// Directions, unit vectors in the weighted norm.
    pub directions: Vec<Vec<f64>>,
    /// Decreasing dyadic scales; at least 3 so stabilisation is observable.
    pub scales: Vec<f64>,
}

impl SeminormProbe {
    /// A reproducible default design: the origin plus pseudo-random points
    /// in a weighted-norm ball, axis directions first and pseudo-random
    /// directions after, scales 2^-start .. 2^-(start+levels-1).
    pub fn sampled(
        model: &SpectralModel,
        n_points: usize,
        n_directions: usize,
        ball_radius: f64,
        scale_start: i32,
        scale_levels: usize,
        seed: u64,
    ) -> Result<Self> {
        if scale_levels < 3 {
            return Err(Error::argument(
                "seminorm probe needs at least 3 scales".to_string(),
            ));
        }
        if n_points == 0 || n_directions == 0 {
            return Err(Error::argument(
                "seminorm probe needs points and directions".to_string(),
            ));
        }
        let n = model.dim();
        let mut rng = substream(seed, &[0x5e]);
        let mut points = Vec::with_capacity(n_points);
        points.push(vec![0.0; n]);
        while points.len() < n_points {
            // uniform direction via normalised Gaussians, uniform radius
            let mut v: Vec<f64> = (0..n)
                .map(|_| {
                    let u: f64 = rng.gen::<f64>() - 0.5;
                    u
                })
                .collect();
            let nr = model.hr_norm(&v)?;
            if nr < 1e-9 {
                continue;
            }
            let r: f64 = rng.gen::<f64>() * ball_radius;
            for vi in v.iter_mut() {
                *vi *= r / nr;
            }
            points.push(v);
        }
        let mut directions = Vec::with_capacity(n_directions);
        // axis directions r_k e_k are unit in the weighted norm
        for k in 0..n.min(n_directions) {
            let mut d = vec![0.0; n];
            d[k] = model.r_eigs()[k];
            directions.push(d);
        }
        while directions.len() < n_directions {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let nr = model.hr_norm(&v)?;
            if nr < 1e-9 {
                continue;
            }
            for vi in v.iter_mut() {
                *vi /= nr;
            }
            directions.push(v);
        }
        let scales: Vec<f64> = (0..scale_levels)
            .map(|i| 2f64.powi(-(scale_start + i as i32)))
            .collect();
        Ok(SeminormProbe {
            points,
            directions,
            scales,
        })
    }

    /// Default design used by the verification suites.
    pub fn default_for(model: &SpectralModel, seed: u64) -> Result<Self> {
        Self::sampled(model, 16, 8, 2.0, 1, 8, seed)
    }

    /// A design clustered near the origin along the first axis, for fields
    /// whose roughness lives at x1 = 0.
    pub fn near_origin(model: &SpectralModel, seed: u64) -> Result<Self> {
        let mut probe = Self::sampled(model, 1, 4, 1.0, 1, 8, seed)?;
        let n = model.dim();
        for &c in &[0.0, 1e-4, -3e-4, 1e-3, -1e-2, 0.05] {
            let mut p = vec![0.0; n];
            p[0] = c;
            probe.points.push(p);
        }
        Ok(probe)
    }
}

/// Per-scale maxima plus the overall estimate.
#[derive(Debug, Clone)]
pub struct SeminormReport {
    /// max over (point, direction) of the quotient, one entry per scale.
    pub per_scale: Vec<f64>,
    /// max over everything.
    pub estimate: f64,
}

impl SeminormReport {
    /// Ratio of the largest to the smallest per-scale maximum, a
    /// stabilisation diagnostic (close to 1 means the exponent is right).
    pub fn scale_spread(&self) -> f64 {
        let mx = self.per_scale.iter().cloned().fold(f64::MIN, f64::max);
        let mn = self.per_scale.iter().cloned().fold(f64::MAX, f64::min);
        if mn <= 0.0 {
            f64::INFINITY
        } else {
            mx / mn
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Hölder quotient sup of a vector-valued map: at each scale s, the max over
/// the design of |F(x + s d) - F(x)| / s^alpha (directions are unit in the
/// weighted norm, so the displacement has weighted norm s).
pub fn holder_seminorm<F>(map: F, alpha: f64, probe: &SeminormProbe) -> Result<SeminormReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::argument(
            "holder_seminorm needs 0 < alpha <= 1".to_string(),
        ));
    }
    let mut per_scale = Vec::with_capacity(probe.scales.len());
    let mut shifted = vec![0.0; probe.points.first().map_or(0, |p| p.len())];
    for &s in &probe.scales {
        let mut worst = 0.0f64;
        for x in &probe.points {
            let fx = map(x);
            for d in &probe.directions {
                for i in 0..x.len() {
                    shifted[i] = x[i] + s * d[i];
                }
                let fy = map(&shifted);
                let diff: Vec<f64> = fy.iter().zip(&fx).map(|(a, b)| a - b).collect();
                let q = l2(&diff) / s.powf(alpha);
                if !q.is_finite() {
                    return Err(Error::estimator("non-finite Hölder quotient", 1));
                }
                worst = worst.max(q);
            }
        }
        per_scale.push(worst);
    }
    let estimate = per_scale.iter().cloned().fold(0.0, f64::max);
    Ok(SeminormReport {
        per_scale,
        estimate,
    })
}

/// Zygmund quotient sup of a vector-valued map: at each scale s, the max of
/// |F(x + 2 s d) - 2 F(x + s d) + F(x)| / s.
pub fn zygmund_seminorm<F>(map: F, probe: &SeminormProbe) -> Result<SeminormReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut per_scale = Vec::with_capacity(probe.scales.len());
    let dim = probe.points.first().map_or(0, |p| p.len());
    let mut x1 = vec![0.0; dim];
    let mut x2 = vec![0.0; dim];
    for &s in &probe.scales {
        let mut worst = 0.0f64;
        for x in &probe.points {
            let f0 = map(x);
            for d in &probe.directions {
                for i in 0..x.len() {
                    x1[i] = x[i] + s * d[i];
                    x2[i] = x[i] + 2.0 * s * d[i];
                }
                let f1 = map(&x1);
                let f2 = map(&x2);
                let mut acc = 0.0;
                for i in 0..f0.len() {
                    let r = f2[i] - 2.0 * f1[i] + f0[i];
                    acc += r * r;
                }
                let q = acc.sqrt() / s;
                if !q.is_finite() {
                    return Err(Error::estimator("non-finite Zygmund quotient", 1));
                }
                worst = worst.max(q);
            }
        }
        per_scale.push(worst);
    }
    let estimate = per_scale.iter().cloned().fold(0.0, f64::max);
    Ok(SeminormReport {
        per_scale,
        estimate,
    })
}
