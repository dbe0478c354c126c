//! Reference solutions for the linear model (G = 0).
//!
//! With the nonlinearity switched off, each spectral mode is an independent
//! scalar Ornstein-Uhlenbeck process:
//!
//! ```text
//!     X_k(t) = e^{a_k t} x_k + N(0, q_k(t)),
//!     q_k(t) = noise_scale^2 r_k^2 (e^{2 a_k t} - 1) / (2 a_k),
//! ```
//!
//! so for observables depending on the first coordinate alone the semigroup
//! action reduces to a one-dimensional Gaussian integral. This module holds
//! the closed forms for sin(w x1), a deterministic high-accuracy quadrature
//! for general phi(x1), and the Laplace-transform references built on top.
//! The verification suites treat these as ground truth when judging the
//! Monte Carlo estimators.

use crate::error::{Error, Result};
use crate::model::SpectralModel;

/// First-mode Gaussian data of the linear flow at time t from x1.
#[derive(Debug, Clone, Copy)]
pub struct OuMode {
    /// e^{a_1 t} x_1
    pub mean: f64,
    /// variance q_1(t)
    pub var: f64,
    /// e^{a_1 t}
    pub decay: f64,
}

/// Mean, variance, and decay factor of the first mode.
pub fn ou_mode1(model: &SpectralModel, t: f64, x1: f64) -> Result<OuMode> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::argument(format!("ou_mode1: t = {t} must be >= 0")));
    }
    let a = model.a_eigs()[0];
    let r = model.r_eigs()[0];
    let decay = (a * t).exp();
    let s = model.noise_scale();
    let var = s * s * r * r * (2.0 * a * t).exp_m1() / (2.0 * a);
    Ok(OuMode {
        mean: decay * x1,
        var,
        decay,
    })
}

/// P(t)[sin(w .)](x) in the linear model: sin(w m) e^{-w^2 q / 2}.
pub fn ou_pt_sin(model: &SpectralModel, omega: f64, t: f64, x: &[f64]) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    Ok((omega * m.mean).sin() * (-omega * omega * m.var / 2.0).exp())
}

/// Directional derivative of P(t)[sin(w .)] along h.
pub fn ou_d1_sin(model: &SpectralModel, omega: f64, t: f64, x: &[f64], h: &[f64]) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    Ok(omega
        * (omega * m.mean).cos()
        * (-omega * omega * m.var / 2.0).exp()
        * m.decay
        * h[0])
}

/// Second directional derivative along (h, k).
pub fn ou_d2_sin(
    model: &SpectralModel,
    omega: f64,
    t: f64,
    x: &[f64],
    h: &[f64],
    k: &[f64],
) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    Ok(-omega
        * omega
        * (omega * m.mean).sin()
        * (-omega * omega * m.var / 2.0).exp()
        * m.decay
        * m.decay
        * h[0]
        * k[0])
}

/// Third directional derivative along (h, k, j).
pub fn ou_d3_sin(
    model: &SpectralModel,
    omega: f64,
    t: f64,
    x: &[f64],
    h: &[f64],
    k: &[f64],
    j: &[f64],
) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    Ok(-omega.powi(3)
        * (omega * m.mean).cos()
        * (-omega * omega * m.var / 2.0).exp()
        * m.decay.powi(3)
        * h[0]
        * k[0]
        * j[0])
}

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = simpson(a, fa, b, fb, fm);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

const INV_SQRT_2PI: f64 = 0.39894228040143267794; // 1/sqrt(2 pi)

/// E[phi(m + s Z) w(Z)] by adaptive Simpson over Z in [-12, 12], where w is
/// the Hermite weight of the requested order (1, Z, Z^2-1, Z^3-3Z).
fn gauss_expect(phi: &dyn Fn(f64) -> f64, mean: f64, sd: f64, hermite: u8) -> f64 {
    let integrand = move |z: f64| -> f64 {
        let w = match hermite {
            0 => 1.0,
            1 => z,
            2 => z * z - 1.0,
            3 => z * (z * z - 3.0),
            _ => unreachable!(),
        };
        phi(mean + sd * z) * w * (-0.5 * z * z).exp() * INV_SQRT_2PI
    };
    adaptive_simpson(&integrand, -12.0, 12.0, 1e-12)
}

/// P(t)[phi(x1)](x) in the linear model by deterministic quadrature.
pub fn ou_pt_1d(
    model: &SpectralModel,
    phi: &dyn Fn(f64) -> f64,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    if m.var <= 0.0 {
        return Ok(phi(m.mean));
    }
    Ok(gauss_expect(phi, m.mean, m.var.sqrt(), 0))
}

/// Directional derivative of P(t)[phi(x1)] along h by the Gaussian
/// integration-by-parts identity D P(t)phi . h = E[phi(m + s Z) Z] / s
/// times e^{a_1 t} h_1. Requires t > 0 (positive variance).
pub fn ou_d1_1d(
    model: &SpectralModel,
    phi: &dyn Fn(f64) -> f64,
    t: f64,
    x: &[f64],
    h: &[f64],
) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    if m.var <= 0.0 {
        return Err(Error::argument(
            "ou_d1_1d needs positive variance (t > 0, noise on)".to_string(),
        ));
    }
    let sd = m.var.sqrt();
    Ok(gauss_expect(phi, m.mean, sd, 1) / sd * m.decay * h[0])
}

/// Second directional derivative, Hermite weight (Z^2 - 1)/s^2.
pub fn ou_d2_1d(
    model: &SpectralModel,
    phi: &dyn Fn(f64) -> f64,
    t: f64,
    x: &[f64],
    h: &[f64],
    k: &[f64],
) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    if m.var <= 0.0 {
        return Err(Error::argument(
            "ou_d2_1d needs positive variance (t > 0, noise on)".to_string(),
        ));
    }
    Ok(gauss_expect(phi, m.mean, m.var.sqrt(), 2) / m.var * m.decay * m.decay * h[0] * k[0])
}

/// Third directional derivative, Hermite weight (Z^3 - 3Z)/s^3.
pub fn ou_d3_1d(
    model: &SpectralModel,
    phi: &dyn Fn(f64) -> f64,
    t: f64,
    x: &[f64],
    h: &[f64],
    k: &[f64],
    j: &[f64],
) -> Result<f64> {
    let m = ou_mode1(model, t, x[0])?;
    if m.var <= 0.0 {
        return Err(Error::argument(
            "ou_d3_1d needs positive variance (t > 0, noise on)".to_string(),
        ));
    }
    let sd = m.var.sqrt();
    Ok(gauss_expect(phi, m.mean, sd, 3) / (sd * m.var)
        * m.decay.powi(3)
        * h[0]
        * k[0]
        * j[0])
}

/// Laplace transform int_0^inf e^{-lambda s} P(s)[sin(w .)](x) ds in the
/// linear model, by adaptive quadrature with an analytic tail cut at
/// 40/lambda (relative tail below 1e-17 of the sup bound).
pub fn ou_resolvent_sin(
    model: &SpectralModel,
    omega: f64,
    lambda: f64,
    x: &[f64],
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::argument("resolvent oracle needs lambda > 0".to_string()));
    }
    let xv = x.to_vec();
    let mc = model.clone();
    let f = move |s: f64| -> f64 {
        (-lambda * s).exp() * ou_pt_sin(&mc, omega, s, &xv).unwrap_or(f64::NAN)
    };
    Ok(adaptive_simpson(&f, 0.0, 40.0 / lambda, 1e-12))
}

/// Laplace transform of the directional derivative of P(s)[sin(w .)].
pub fn ou_resolvent_d1_sin(
    model: &SpectralModel,
    omega: f64,
    lambda: f64,
    x: &[f64],
    h: &[f64],
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::argument("resolvent oracle needs lambda > 0".to_string()));
    }
    let xv = x.to_vec();
    let hv = h.to_vec();
    let mc = model.clone();
    let f = move |s: f64| -> f64 {
        (-lambda * s).exp() * ou_d1_sin(&mc, omega, s, &xv, &hv).unwrap_or(f64::NAN)
    };
    Ok(adaptive_simpson(&f, 0.0, 40.0 / lambda, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn desk() -> SpectralModel {
        SpectralModel::default_desk()
    }

    fn e1(c: f64) -> Vec<f64> {
        let mut v = vec![0.0; 8];
        v[0] = c;
        v
    }

    // The literals below were computed independently with 30-digit
    // arithmetic and are frozen here; the closed forms must reproduce them.
    #[test]
    fn frozen_sine_closed_forms() {
        let m = desk();
        let x = e1(0.4);
        let mode = ou_mode1(&m, 1.0, 0.4).unwrap();
        assert_relative_eq!(mode.var, 0.63212055882855768, max_relative = 1e-15);
        assert_relative_eq!(mode.mean, 0.24261226388505337, max_relative = 1e-15);
        assert_relative_eq!(
            ou_pt_sin(&m, 1.0, 1.0, &x).unwrap(),
            0.17513810416045952,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            ou_d1_sin(&m, 1.0, 1.0, &x, &e1(2.0)).unwrap(),
            0.85844146512562187,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            ou_d2_sin(&m, 1.0, 1.0, &x, &e1(2.0), &e1(-1.5)).unwrap(),
            0.19328912365912712,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            ou_d3_sin(&m, 1.0, 1.0, &x, &e1(2.0), &e1(-1.5), &e1(0.7)).unwrap(),
            0.33159311479224837,
            max_relative = 1e-14
        );
    }

    #[test]
    fn quadrature_agrees_with_closed_form_on_sine() {
        let m = desk();
        let x = e1(0.4);
        let w = 3.0;
        let phi = move |u: f64| (w * u).sin();
        assert_relative_eq!(
            ou_pt_1d(&m, &phi, 0.7, &x).unwrap(),
            ou_pt_sin(&m, w, 0.7, &x).unwrap(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            ou_d1_1d(&m, &phi, 0.7, &x, &e1(1.3)).unwrap(),
            ou_d1_sin(&m, w, 0.7, &x, &e1(1.3)).unwrap(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            ou_d2_1d(&m, &phi, 0.7, &x, &e1(1.3), &e1(0.5)).unwrap(),
            ou_d2_sin(&m, w, 0.7, &x, &e1(1.3), &e1(0.5)).unwrap(),
            max_relative = 1e-8
        );
        assert_relative_eq!(
            ou_d3_1d(&m, &phi, 0.7, &x, &e1(1.3), &e1(0.5), &e1(-2.0)).unwrap(),
            ou_d3_sin(&m, w, 0.7, &x, &e1(1.3), &e1(0.5), &e1(-2.0)).unwrap(),
            max_relative = 1e-7
        );
    }

    #[test]
    fn frozen_nonsmooth_quadrature_values() {
        // ramp field, w = 1e-3: value at x1 = 0.05, t = 0.1, and the
        // derivative at the origin where the field is effectively sign(x1)
        let m = desk();
        let ramp = |u: f64| (u / 1e-3).clamp(-1.0, 1.0);
        assert_relative_eq!(
            ou_pt_1d(&m, &ramp, 0.1, &e1(0.05)).unwrap(),
            0.12253033284450681,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            ou_d1_1d(&m, &ramp, 0.1, &e1(0.0), &e1(1.0)).unwrap(),
            2.4603192710187123,
            max_relative = 1e-8
        );
    }

    #[test]
    fn frozen_resolvent_value() {
        let m = desk();
        assert_relative_eq!(
            ou_resolvent_sin(&m, 1.0, 1.0, &e1(0.4)).unwrap(),
            0.21647991253857809,
            max_relative = 1e-10
        );
        assert!(ou_resolvent_sin(&m, 1.0, 0.0, &e1(0.4)).is_err());
    }

    #[test]
    fn zero_time_and_degenerate_cases() {
        let m = desk();
        let x = e1(0.3);
        // t = 0: P(0) f = f
        assert_relative_eq!(
            ou_pt_sin(&m, 2.0, 0.0, &x).unwrap(),
            (0.6f64).sin(),
            max_relative = 1e-15
        );
        let phi = |u: f64| u * u;
        assert_relative_eq!(ou_pt_1d(&m, &phi, 0.0, &x).unwrap(), 0.09, max_relative = 1e-12);
        assert!(ou_d1_1d(&m, &phi, 0.0, &x, &e1(1.0)).is_err());
        assert!(ou_mode1(&m, -1.0, 0.0).is_err());
        // quadratic in closed form: E (m + s Z)^2 = m^2 + q
        let mode = ou_mode1(&m, 0.5, 0.3).unwrap();
        assert_relative_eq!(
            ou_pt_1d(&m, &phi, 0.5, &x).unwrap(),
            mode.mean * mode.mean + mode.var,
            max_relative = 1e-10
        );
    }
}
