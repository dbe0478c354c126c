//! Test-function catalog.
//!
//! The laboratory probes semigroup smoothing by feeding it scalar fields of
//! known regularity. Each catalog entry declares its regularity class and,
//! where we can certify one, the constants that the verification suites
//! compare against (sup bound, Hölder seminorm, smooth norm). All bundled
//! fields depend on the state through the first coordinate only — that is
//! the coordinate with the largest noise weight, so it is where smoothing
//! effects are cleanest to measure.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::SpectralModel;

/// Declared regularity of a scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegClass {
    /// Bounded and uniformly continuous; nothing more claimed.
    Buc,
    /// alpha-Hölder with respect to the weighted norm, 0 < alpha < 1.
    HolderR(f64),
    /// Bounded with a bounded, continuous weighted gradient.
    Smooth,
}

impl fmt::Display for RegClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegClass::Buc => write!(f, "buc"),
            RegClass::HolderR(a) => write!(f, "holder({a})"),
            RegClass::Smooth => write!(f, "smooth"),
        }
    }
}

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A scalar test function on state space, with optional certified data.
#[derive(Clone)]
pub struct ScalarField {
    pub name: String,
    eval: EvalFn,
    grad_r: Option<GradFn>,
    pub class: RegClass,
    /// Certified sup |f|, when finite and known.
    pub sup_bound: Option<f64>,
    /// Certified Hölder seminorm in the weighted norm (for HolderR class).
    pub holder_seminorm: Option<f64>,
    /// Certified sup |f| + sup of the weighted gradient norm (smooth class).
    pub smooth_norm: Option<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("class", &self.class)
            .field("sup_bound", &self.sup_bound)
            .field("holder_seminorm", &self.holder_seminorm)
            .field("smooth_norm", &self.smooth_norm)
            .finish()
    }
}

impl ScalarField {
    pub fn new(
        name: impl Into<String>,
        class: RegClass,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            name: name.into(),
            eval: Arc::new(eval),
            grad_r: None,
            class,
            sup_bound: None,
            holder_seminorm: None,
            smooth_norm: None,
        }
    }

    pub fn with_grad_r(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad_r = Some(Arc::new(g));
        self
    }

    pub fn with_sup_bound(mut self, b: f64) -> Self {
        self.sup_bound = Some(b);
        self
    }

    pub fn with_holder_seminorm(mut self, s: f64) -> Self {
        self.holder_seminorm = Some(s);
        self
    }

    pub fn with_smooth_norm(mut self, n: f64) -> Self {
        self.smooth_norm = Some(n);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn has_grad_r(&self) -> bool {
        self.grad_r.is_some()
    }

    /// Weighted gradient (the ordinary gradient pushed through R^2), where
    /// the catalog provides one in closed form.
    pub fn grad_r(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.grad_r.as_ref().map(|g| g(x))
    }

    /// The norm the decay-rate experiments divide by: certified smooth norm
    /// if present, else Hölder seminorm, else sup bound, else 1.
    pub fn reference_norm(&self) -> f64 {
        self.smooth_norm
            .or(self.holder_seminorm)
            .or(self.sup_bound)
            .unwrap_or(1.0)
    }
}

/// One catalog row, for listings.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub pattern: &'static str,
    pub class: &'static str,
    pub what: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            pattern: "const:c=<v>",
            class: "smooth",
            what: "constant field; every derivative estimator must return 0",
        },
        CatalogEntry {
            pattern: "sin:omega=<w>",
            class: "smooth",
            what: "sin(w x1); closed forms available in the linear model",
        },
        CatalogEntry {
            pattern: "holder:alpha=<a>",
            class: "holder",
            what: "min(|x1|^a, 1); certified Hölder seminorm in the weighted norm",
        },
        CatalogEntry {
            pattern: "ramp:w=<w>",
            class: "buc",
            what: "clamp(x1/w, -1, 1); near-discontinuity, worst-case smoothing rates",
        },
        CatalogEntry {
            pattern: "xlogx",
            class: "buc",
            what: "x1 log|x1| cut to [-1,1]; Zygmund-regular but not Lipschitz at 0",
        },
        CatalogEntry {
            pattern: "quad",
            class: "smooth",
            what: "x1^2; unbounded, for exact second-difference checks",
        },
    ]
}

/// Parse a field specification like "sin:omega=50" against a model (the
/// model supplies the noise weights that enter weighted gradients and
/// certified constants).
pub fn parse_field(spec: &str, model: &SpectralModel) -> Result<ScalarField> {
    let (head, args) = match spec.split_once(':') {
        Some((h, a)) => (h, a),
        None => (spec, ""),
    };
    let mut kv = std::collections::BTreeMap::new();
    if !args.is_empty() {
        for part in args.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::argument(format!("bad field argument '{part}' in '{spec}'")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::argument(format!("bad number '{v}' in field '{spec}'")))?;
            kv.insert(k.to_string(), v);
        }
    }
    let r1 = model.r_eigs()[0];
    match head {
        "const" => {
            let c = *kv.get("c").unwrap_or(&1.0);
            let n = model.dim();
            Ok(ScalarField::new(format!("const:c={c}"), RegClass::Smooth, move |_x| c)
                .with_grad_r(move |_x| vec![0.0; n])
                .with_sup_bound(c.abs())
                .with_smooth_norm(c.abs()))
        }
        "sin" => {
            let w = *kv.get("omega").unwrap_or(&1.0);
            if !(w > 0.0) {
                return Err(Error::argument("sin field needs omega > 0".to_string()));
            }
            let n = model.dim();
            let r1sq = r1 * r1;
            Ok(
                ScalarField::new(format!("sin:omega={w}"), RegClass::Smooth, move |x| {
                    (w * x[0]).sin()
                })
                .with_grad_r(move |x| {
                    let mut g = vec![0.0; n];
                    g[0] = r1sq * w * (w * x[0]).cos();
                    g
                })
                .with_sup_bound(1.0)
                // sup|f| + sup of the weighted gradient norm: the gradient is
                // w cos(w x1) e1, whose weighted norm is r1 w |cos|.
                .with_smooth_norm(1.0 + w * r1),
            )
        }
        "holder" => {
            let a = *kv.get("alpha").unwrap_or(&0.5);
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::argument("holder field needs 0 < alpha < 1".to_string()));
            }
            Ok(
                ScalarField::new(format!("holder:alpha={a}"), RegClass::HolderR(a), move |x| {
                    x[0].abs().powf(a).min(1.0)
                })
                .with_sup_bound(1.0)
                // |f(x)-f(y)| <= ||x1|^a - |y1|^a| <= |x1-y1|^a and the first
                // coordinate gap is at most r1 times the weighted norm of x-y;
                // equality is approached along e1 near the origin.
                .with_holder_seminorm(r1.powf(a)),
            )
        }
        "ramp" => {
            let w = *kv.get("w").unwrap_or(&1e-3);
            if !(w > 0.0) {
                return Err(Error::argument("ramp field needs w > 0".to_string()));
            }
            Ok(
                ScalarField::new(format!("ramp:w={w}"), RegClass::Buc, move |x| {
                    (x[0] / w).clamp(-1.0, 1.0)
                })
                .with_sup_bound(1.0),
            )
        }
        "xlogx" => Ok(ScalarField::new("xlogx", RegClass::Buc, |x| {
            let u = x[0];
            if u == 0.0 || u.abs() > 1.0 {
                0.0
            } else {
                u * u.abs().ln()
            }
        })
        .with_sup_bound((1.0f64).exp().recip())),
        "quad" => {
            let n = model.dim();
            let r1sq = r1 * r1;
            Ok(ScalarField::new("quad", RegClass::Smooth, |x| x[0] * x[0]).with_grad_r(
                move |x| {
                    let mut g = vec![0.0; n];
                    g[0] = 2.0 * r1sq * x[0];
                    g
                },
            ))
        }
        other => Err(Error::argument(format!(
            "unknown field '{other}'; known: const, sin, holder, ramp, xlogx, quad"
        ))),
    }
}

/// A time-dependent forcing term for the inhomogeneous evolution problem.
#[derive(Clone)]
pub struct TimeField {
    pub name: String,
    eval: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
}

impl TimeField {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TimeField {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, s: f64, x: &[f64]) -> f64 {
        (self.eval)(s, x)
    }

    pub fn zero() -> Self {
        TimeField::new("zero", |_s, _x| 0.0)
    }
}

/// Parse a forcing specification: "zero", "const:c=<v>", or
/// "sindecay:omega=<w>,rate=<r>" meaning sin(w x1) e^(-r s).
pub fn parse_time_field(spec: &str) -> Result<TimeField> {
    let (head, args) = match spec.split_once(':') {
        Some((h, a)) => (h, a),
        None => (spec, ""),
    };
    let mut kv = std::collections::BTreeMap::new();
    if !args.is_empty() {
        for part in args.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::argument(format!("bad forcing argument '{part}'")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::argument(format!("bad number '{v}' in forcing '{spec}'")))?;
            kv.insert(k.to_string(), v);
        }
    }
    match head {
        "zero" => Ok(TimeField::zero()),
        "const" => {
            let c = *kv.get("c").unwrap_or(&1.0);
            Ok(TimeField::new(format!("const:c={c}"), move |_s, _x| c))
        }
        "sindecay" => {
            let w = *kv.get("omega").unwrap_or(&1.0);
            let r = *kv.get("rate").unwrap_or(&1.0);
            Ok(TimeField::new(
                format!("sindecay:omega={w},rate={r}"),
                move |s, x| (w * x[0]).sin() * (-r * s).exp(),
            ))
        }
        other => Err(Error::argument(format!(
            "unknown forcing '{other}'; known: zero, const, sindecay"
        ))),
    }
}
