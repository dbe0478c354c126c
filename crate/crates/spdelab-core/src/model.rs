//! Diagonal spectral model and the weighted Cameron-Martin-type geometry.
//!
//! Everything in this crate runs on a finite spectral truncation. The state
//! space is R^n identified with the span of the leading n eigenvectors of a
//! positive trace-class operator Q with eigenvalues
//!
//! ```text
//!     lambda_1 >= lambda_2 >= ... >= lambda_n > 0.
//! ```
//!
//! The drift operator and the noise shape are fractional powers of Q acting
//! diagonally:
//!
//! ```text
//!     A = -(1/2) Q^{-beta}        a_k = -(1/2) lambda_k^{-beta}   (all < 0)
//!     R = Q^{rho}                 r_k = lambda_k^{rho}            (all > 0)
//! ```
//!
//! The reproducing-kernel geometry of the noise enters through the weighted
//! inner product
//!
//! ```text
//!     <x, y>_R = <R^{-1} x, R^{-1} y> = sum_k x_k y_k / r_k^2,
//! ```
//!
//! in which all derivative estimates and all bounds downstream are stated.
//! Useful elementary fact, used all over: |h| <= |R| * |h|_R, where |R| is
//! the operator norm max_k r_k.
//!
//! [`ModelConstants`] packages the handful of scalars the quantitative
//! bounds need: the semigroup growth rate w_R (here just max_k a_k), the
//! dissipativity budget zeta_R = w_R + |R| M once a drift nonlinearity with
//! derivative bound M is switched on, and the second/third order constants
//! M2 = M |R|^2 and M3 = M max{3 M2, |R|} |R|^2.
//!
//! [`k_bounds`] evaluates the two growth factors that appear in the
//! second- and third-order variational estimates:
//!
//! ```text
//!     K1(t, z) = e^{tz} (e^{tz} - 1) / z                      (z != 0)
//!              = t                                            (z  = 0)
//!     K2(t, z) = e^{tz} (e^{tz} - 1) ((1+z) e^{tz} + z - 1) / (2 z^2)
//!              = t^2/2 + t                                    (z  = 0)
//! ```
//!
//! both continuous across z = 0, together with the coarse majorant
//! (1 + |z|) max{e^{tz}, e^{3tz}} / z^2 valid for z != 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite spectral truncation of the diagonal model. Construct through
/// [`SpectralModel::new`] (or a convenience constructor); invalid data are
/// rejected there, so a held value is always well formed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralModel {
    n: usize,
    q_eigs: Vec<f64>,
    beta: f64,
    rho: f64,
    /// Exponent eta in the (0,1)-integrability check for the noise trace.
    trace_exponent: f64,
    /// Multiplies the stochastic increment only. 1 is the model proper;
    /// 0 gives the deterministic flow, handy in scheme tests.
    noise_scale: f64,
    // derived at construction
    a_eigs: Vec<f64>,
    r_eigs: Vec<f64>,
}

impl SpectralModel {
    pub fn new(
        q_eigs: Vec<f64>,
        beta: f64,
        rho: f64,
        trace_exponent: f64,
        noise_scale: f64,
    ) -> Result<Self> {
        let n = q_eigs.len();
        if n == 0 {
            return Err(Error::config("q_eigs must be non-empty"));
        }
        for (k, &l) in q_eigs.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::config(format!(
                    "q_eigs[{k}] = {l} must be finite and > 0"
                )));
            }
            if k > 0 && l > q_eigs[k - 1] {
                return Err(Error::config(format!(
                    "q_eigs must be nonincreasing, violated at index {k}"
                )));
            }
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::config(format!("beta = {beta} must be >= 0")));
        }
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::config(format!("rho = {rho} must be >= 0")));
        }
        if !trace_exponent.is_finite() || trace_exponent <= 0.0 || trace_exponent >= 1.0 {
            return Err(Error::config(format!(
                "trace_exponent = {trace_exponent} must lie in (0, 1)"
            )));
        }
        if !noise_scale.is_finite() || noise_scale < 0.0 {
            return Err(Error::config(format!(
                "noise_scale = {noise_scale} must be >= 0"
            )));
        }
        let a_eigs: Vec<f64> = q_eigs.iter().map(|l| -0.5 * l.powf(-beta)).collect();
        let r_eigs: Vec<f64> = q_eigs.iter().map(|l| l.powf(rho)).collect();
        let model = SpectralModel {
            n,
            q_eigs,
            beta,
            rho,
            trace_exponent,
            noise_scale,
            a_eigs,
            r_eigs,
        };
        // The t^{-eta}-weighted trace integral is automatically finite at a
        // finite truncation; evaluating it anyway catches absurd parameter
        // combinations (overflow in the fractional powers and the like).
        let tr = model.trace_integral(1.0);
        if !tr.is_finite() {
            return Err(Error::config(format!(
                "trace integral evaluated to {tr}; model parameters out of range"
            )));
        }
        Ok(model)
    }

    /// Power-law spectrum lambda_k = k^{-decay}.
    pub fn power_law(
        n: usize,
        decay: f64,
        beta: f64,
        rho: f64,
        trace_exponent: f64,
        noise_scale: f64,
    ) -> Result<Self> {
        if !decay.is_finite() || decay < 0.0 {
            return Err(Error::config(format!("decay = {decay} must be >= 0")));
        }
        let q_eigs = (1..=n).map(|k| (k as f64).powf(-decay)).collect();
        Self::new(q_eigs, beta, rho, trace_exponent, noise_scale)
    }

    /// The small reference model used throughout the tests and the bundled
    /// configs: n = 8, lambda_k = k^{-2}, beta = 1, rho = 1/2.
    pub fn default_desk() -> Self {
        Self::power_law(8, 2.0, 1.0, 0.5, 0.5, 1.0)
            .expect("desk model parameters are valid by construction")
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn q_eigs(&self) -> &[f64] {
        &self.q_eigs
    }
    /// Drift eigenvalues a_k = -(1/2) lambda_k^{-beta}; strictly negative.
    pub fn a_eigs(&self) -> &[f64] {
        &self.a_eigs
    }
    /// Noise-shape eigenvalues r_k = lambda_k^{rho}; strictly positive.
    pub fn r_eigs(&self) -> &[f64] {
        &self.r_eigs
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn trace_exponent(&self) -> f64 {
        self.trace_exponent
    }
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    fn check_dim(&self, x: &[f64], what: &str) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::argument(format!(
                "{what}: expected dimension {}, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(())
    }

    /// Weighted inner product <x, y>_R = sum_k x_k y_k / r_k^2.
    pub fn hr_inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x, "hr_inner x")?;
        self.check_dim(y, "hr_inner y")?;
        let mut acc = 0.0;
        for k in 0..self.n {
            let r = self.r_eigs[k];
            acc += x[k] * y[k] / (r * r);
        }
        Ok(acc)
    }

    /// |x|_R = sqrt(<x, x>_R).
    pub fn hr_norm(&self, x: &[f64]) -> Result<f64> {
        Ok(self.hr_inner(x, x)?.sqrt())
    }

    /// Plain Euclidean norm on the ambient space, for convenience.
    pub fn x_norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Componentwise semigroup action (e^{tA} x)_k = e^{a_k t} x_k, t >= 0.
    pub fn apply_exp_a(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x, "apply_exp_a x")?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::argument(format!("apply_exp_a: t = {t} must be >= 0")));
        }
        Ok((0..self.n)
            .map(|k| (self.a_eigs[k] * t).exp() * x[k])
            .collect())
    }

    /// The factors e^{a_k t} alone; the stepping engine caches these.
    pub fn exp_a_factors(&self, t: f64) -> Vec<f64> {
        self.a_eigs.iter().map(|a| (a * t).exp()).collect()
    }

    /// Apply R componentwise: (R x)_k = r_k x_k.
    pub fn apply_r(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x, "apply_r x")?;
        Ok((0..self.n).map(|k| self.r_eigs[k] * x[k]).collect())
    }

    /// Numeric value of the weighted trace integral
    /// int_0^T t^{-eta} sum_k r_k^2 e^{2 a_k t} dt,
    /// split into an analytic bound on [0, t0] (where e^{2at} <= 1) and a
    /// log-spaced midpoint rule on [t0, T]. Finite by construction at any
    /// finite truncation; exposed for diagnostics.
    pub fn trace_integral(&self, t_end: f64) -> f64 {
        let eta = self.trace_exponent;
        let sum_r2: f64 = self.r_eigs.iter().map(|r| r * r).sum();
        let t0 = (1e-6_f64).min(t_end);
        // on [0, t0]: integrand <= t^{-eta} sum r_k^2
        let head = sum_r2 * t0.powf(1.0 - eta) / (1.0 - eta);
        let mut tail = 0.0;
        let cells = 400;
        let lg0 = t0.ln();
        let lg1 = t_end.ln();
        if lg1 > lg0 {
            let dl = (lg1 - lg0) / cells as f64;
            for j in 0..cells {
                let tm = (lg0 + (j as f64 + 0.5) * dl).exp();
                let width = (lg0 + (j + 1) as f64 * dl).exp() - (lg0 + j as f64 * dl).exp();
                let trace: f64 = self
                    .r_eigs
                    .iter()
                    .zip(&self.a_eigs)
                    .map(|(r, a)| r * r * (2.0 * a * tm).exp())
                    .sum();
                tail += tm.powf(-eta) * trace * width;
            }
        }
        head + tail
    }

    /// Scalars entering the quantitative bounds, for a drift nonlinearity
    /// whose first three derivatives are bounded by `m`.
    pub fn compute_constants(&self, m: f64) -> Result<ModelConstants> {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::argument(format!("derivative bound m = {m} must be >= 0")));
        }
        // a_k and r_k are both maximal at k = 1 for a nonincreasing
        // spectrum, but take the max explicitly rather than rely on it.
        let w_r = self.a_eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r_norm = self.r_eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let zeta_r = w_r + r_norm * m;
        let m2 = m * r_norm * r_norm;
        let m3 = m * (3.0 * m2).max(r_norm) * r_norm * r_norm;
        Ok(ModelConstants {
            w_r,
            r_norm,
            lip_const: m,
            zeta_r,
            m2,
            m3,
            b_growth: 1.0,
            theta: w_r,
        })
    }
}

/// The constants the bound checks and the decay experiments consume.
/// All derived from the spectrum and a single derivative bound M; see
/// [`SpectralModel::compute_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Semigroup growth rate on H_R: max_k a_k (diagonal case).
    pub w_r: f64,
    /// Operator norm |R| = max_k r_k.
    pub r_norm: f64,
    /// Derivative bound M of the drift nonlinearity.
    pub lip_const: f64,
    /// Dissipativity budget zeta_R = w_R + |R| M.
    pub zeta_r: f64,
    /// M2 = M |R|^2 (second-order forcing constant).
    pub m2: f64,
    /// M3 = M max{3 M2, |R|} |R|^2 (third-order forcing constant).
    pub m3: f64,
    /// Growth prefactor of e^{tA} on H_R; 1 in the diagonal model.
    pub b_growth: f64,
    /// Growth exponent of e^{tA} on H_R; equals w_R here.
    pub theta: f64,
}

/// Growth factors for the second/third order bounds at time `t` and
/// dissipativity budget `zeta`, plus the coarse majorant where defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBounds {
    pub k1: f64,
    pub k2: f64,
    /// (1 + |zeta|) max{e^{t zeta}, e^{3 t zeta}} / zeta^2; None at zeta = 0.
    pub majorant: Option<f64>,
}

/// Threshold below which the z = 0 closed forms are used. The rearranged
/// expressions below are cancellation-free, so this only guards the
/// literal 0/0.
const ZETA_TINY: f64 = 1e-300;

/// Evaluate K1 and K2 (see module docs) at (t, zeta), t >= 0.
///
/// Near zeta = 0 the naive formula for K2 subtracts nearly equal numbers;
/// we use the identity (1+z) e^{tz} + z - 1 = (1+z) (e^{tz} - 1) + 2z and
/// `exp_m1` so every factor vanishes linearly in z and the quotient stays
/// accurate down to the switch point.
pub fn k_bounds(t: f64, zeta: f64) -> Result<KBounds> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::argument(format!("k_bounds: t = {t} must be >= 0")));
    }
    if !zeta.is_finite() {
        return Err(Error::argument("k_bounds: zeta must be finite".to_string()));
    }
    let (k1, k2) = if zeta.abs() < ZETA_TINY {
        (t, 0.5 * t * t + t)
    } else {
        let z = zeta;
        let etz = (t * z).exp();
        let em1 = (t * z).exp_m1();
        let k1 = etz * em1 / z;
        let inner = (1.0 + z) * em1 + 2.0 * z;
        let k2 = etz * em1 * inner / (2.0 * z * z);
        (k1, k2)
    };
    let majorant = if zeta.abs() < ZETA_TINY {
        None
    } else {
        let grow = (t * zeta).exp().max((3.0 * t * zeta).exp());
        Some((1.0 + zeta.abs()) * grow / (zeta * zeta))
    };
    Ok(KBounds { k1, k2, majorant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn desk_model_shape() {
        let m = SpectralModel::default_desk();
        assert_eq!(m.dim(), 8);
        assert_relative_eq!(m.q_eigs()[0], 1.0);
        assert_relative_eq!(m.q_eigs()[7], (8.0_f64).powi(-2));
        // a_k = -(1/2) k^2, r_k = 1/k for lambda_k = k^{-2}, beta = 1, rho = 1/2
        assert_relative_eq!(m.a_eigs()[0], -0.5);
        assert_relative_eq!(m.a_eigs()[2], -4.5);
        assert_relative_eq!(m.r_eigs()[0], 1.0);
        assert_relative_eq!(m.r_eigs()[3], 0.25);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(SpectralModel::new(vec![], 1.0, 0.5, 0.5, 1.0).is_err());
        assert!(SpectralModel::new(vec![1.0, 2.0], 1.0, 0.5, 0.5, 1.0).is_err()); // increasing
        assert!(SpectralModel::new(vec![1.0, -0.1], 1.0, 0.5, 0.5, 1.0).is_err());
        assert!(SpectralModel::new(vec![1.0], -1.0, 0.5, 0.5, 1.0).is_err());
        assert!(SpectralModel::new(vec![1.0], 1.0, -0.5, 0.5, 1.0).is_err());
        assert!(SpectralModel::new(vec![1.0], 1.0, 0.5, 1.0, 1.0).is_err()); // eta = 1
        assert!(SpectralModel::new(vec![1.0], 1.0, 0.5, 0.0, 1.0).is_err()); // eta = 0
        assert!(SpectralModel::new(vec![1.0], 1.0, 0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn hr_inner_of_first_basis_vector_is_inverse_r1_squared() {
        // Desk model: r_1 = 1, so <e1, e1>_R = 1.
        let m = SpectralModel::default_desk();
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        assert_relative_eq!(m.hr_inner(&e1, &e1).unwrap(), 1.0);
        // Fourth mode: r_4 = 1/4, so <e4, e4>_R = 16.
        let mut e4 = vec![0.0; 8];
        e4[3] = 1.0;
        assert_relative_eq!(m.hr_inner(&e4, &e4).unwrap(), 16.0);
    }

    #[test]
    fn hr_inner_dimension_mismatch_is_an_error() {
        let m = SpectralModel::default_desk();
        assert!(m.hr_inner(&[1.0, 2.0], &vec![0.0; 8]).is_err());
    }

    #[test]
    fn ambient_norm_dominated_by_weighted_norm() {
        // |h| <= |R| |h|_R, with equality on the top mode.
        let m = SpectralModel::default_desk();
        let c = m.compute_constants(0.0).unwrap();
        let h: Vec<f64> = (0..8).map(|k| (k as f64 * 0.7).sin()).collect();
        let lhs = SpectralModel::x_norm(&h);
        let rhs = c.r_norm * m.hr_norm(&h).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-12));
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        assert_relative_eq!(
            SpectralModel::x_norm(&e1),
            c.r_norm * m.hr_norm(&e1).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn exp_a_is_componentwise_decay() {
        let m = SpectralModel::default_desk();
        let x = vec![1.0; 8];
        let y = m.apply_exp_a(0.3, &x).unwrap();
        for k in 0..8 {
            assert_relative_eq!(y[k], (m.a_eigs()[k] * 0.3).exp(), max_relative = 1e-14);
            assert!(y[k] <= x[k]); // a_k < 0
        }
        assert!(m.apply_exp_a(-0.1, &x).is_err());
    }

    #[test]
    fn exp_a_semigroup_law() {
        let m = SpectralModel::default_desk();
        let x: Vec<f64> = (0..8).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let both = m.apply_exp_a(0.7, &x).unwrap();
        let stepped = m
            .apply_exp_a(0.3, &m.apply_exp_a(0.4, &x).unwrap())
            .unwrap();
        for k in 0..8 {
            assert_relative_eq!(both[k], stepped[k], max_relative = 1e-13);
        }
    }

    #[test]
    fn desk_constants_at_m_tenth() {
        let m = SpectralModel::default_desk();
        let c = m.compute_constants(0.1).unwrap();
        assert_relative_eq!(c.w_r, -0.5);
        assert_relative_eq!(c.r_norm, 1.0);
        assert_relative_eq!(c.zeta_r, -0.4);
        assert_relative_eq!(c.m2, 0.1);
        assert_relative_eq!(c.m3, 0.1); // max(0.3, 1.0) = 1.0
        assert_relative_eq!(c.b_growth, 1.0);
        assert_relative_eq!(c.theta, -0.5);
    }

    #[test]
    fn k_bounds_closed_values() {
        // K1(1, 0) = 1, K2(1, 0) = 1.5
        let kb = k_bounds(1.0, 0.0).unwrap();
        assert_relative_eq!(kb.k1, 1.0);
        assert_relative_eq!(kb.k2, 1.5);
        assert!(kb.majorant.is_none());
        // K1(ln 2, 1) = e^{ln2}(e^{ln2}-1)/1 = 2
        let kb = k_bounds(std::f64::consts::LN_2, 1.0).unwrap();
        assert_relative_eq!(kb.k1, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn k_bounds_continuous_across_zero() {
        for t in [0.1, 1.0, 3.0] {
            let at0 = k_bounds(t, 0.0).unwrap();
            for z in [1e-8, -1e-8, 1e-12, -1e-12] {
                let kb = k_bounds(t, z).unwrap();
                assert_abs_diff_eq!(kb.k1, at0.k1, epsilon = 1e-6 * (1.0 + at0.k1));
                assert_abs_diff_eq!(kb.k2, at0.k2, epsilon = 1e-6 * (1.0 + at0.k2));
            }
        }
    }

    #[test]
    fn k_bounds_majorant_dominates() {
        for &t in &[0.05, 0.3, 1.0, 2.5] {
            for &z in &[-2.0, -0.4, -0.01, 0.01, 0.4, 2.0] {
                let kb = k_bounds(t, z).unwrap();
                let maj = kb.majorant.unwrap();
                assert!(
                    kb.k1.max(kb.k2) <= maj * (1.0 + 1e-12),
                    "majorant failed at t={t}, zeta={z}: K={} vs {}",
                    kb.k1.max(kb.k2),
                    maj
                );
            }
        }
    }

    #[test]
    fn trace_integral_finite_for_desk_model() {
        let m = SpectralModel::default_desk();
        let v = m.trace_integral(1.0);
        assert!(v.is_finite() && v > 0.0);
    }
}
