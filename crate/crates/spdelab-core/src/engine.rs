//! Exponential Euler engine: mild-solution paths, variational processes,
//! integration-by-parts weights, and the pathwise growth-bound checks.
//!
//! One step of size dt advances the state by treating the linear part
//! exactly and freezing the nonlinearity and the noise shape at the left
//! endpoint:
//!
//! ```text
//!     X_{i+1} = e^{dt A} X_i  +  A^{-1}(e^{dt A} - I) R G(X_i)
//!                             +  e^{dt A} R dW_i * noise_scale .
//! ```
//!
//! The middle coefficient is the exact integral of e^{(dt-s)A} against a
//! constant forcing, componentwise (e^{a_k dt} - 1)/a_k; all a_k < 0 so
//! the division is safe. The same scheme, minus noise, advances the
//! variational processes, whose drifts are the linearizations along X:
//!
//! ```text
//!     d d1 = [A + R DG(X)] d1 dt
//!     d d2 = [A + R DG(X)] d2 dt + R D2G(X)(d1h, d1k) dt
//!     d d3 = [A + R DG(X)] d3 dt + R D2G(X)(d1j, d2hk) dt
//!                                + R D2G(X)(d2hj, d1k) dt
//!                                + R D2G(X)(d1h, d2kj) dt
//!                                + R D3G(X)(d1h, d1k, d1j) dt
//! ```
//!
//! started at d1(0) = h (direction), d2(0) = d3(0) = 0. Alongside, the
//! weights
//!
//! ```text
//!     w_i(t) = int_0^t < d_i(s), R dW(s) >_R
//! ```
//!
//! accumulate by the left-point rule sum_i <d_i(t_i), R dW_i>_R, which is
//! the discretization that keeps them martingales.
//!
//! Carrying order 3 requires the full triangle of lower-order processes
//! (three first-order directions, three second-order pairs); the bundle
//! exposes the primary ones (h; h,k; h,k,j) and estimators read the rest
//! off [`PathState`] directly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{k_bounds, ModelConstants, SpectralModel};
use crate::nonlin::Nonlinearity;
use crate::rng::substream;

/// Run parameters for path simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: u64,
    pub master_seed: u64,
    /// Highest variational order to carry (0..=3). Order i needs the
    /// corresponding directions below to be set.
    pub order: u8,
    pub h: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
    pub j: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn plain(dt: f64, t_end: f64, n_paths: u64, master_seed: u64) -> Self {
        SimConfig {
            dt,
            t_end,
            n_paths,
            master_seed,
            order: 0,
            h: None,
            k: None,
            j: None,
        }
    }

    pub fn with_directions(
        mut self,
        order: u8,
        h: Option<Vec<f64>>,
        k: Option<Vec<f64>>,
        j: Option<Vec<f64>>,
    ) -> Self {
        self.order = order;
        self.h = h;
        self.k = k;
        self.j = j;
        self
    }

    fn validate(&self, model: &SpectralModel) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::argument(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::argument(format!(
                "t_end = {} must be > 0",
                self.t_end
            )));
        }
        if self.order > 3 {
            return Err(Error::argument("order must be 0..=3".to_string()));
        }
        let need = |v: &Option<Vec<f64>>, name: &str| -> Result<()> {
            match v {
                Some(d) if d.len() == model.dim() => Ok(()),
                Some(d) => Err(Error::argument(format!(
                    "direction {name}: expected dimension {}, got {}",
                    model.dim(),
                    d.len()
                ))),
                None => Err(Error::argument(format!(
                    "order {} requires direction {name}",
                    self.order
                ))),
            }
        };
        if self.order >= 1 {
            need(&self.h, "h")?;
        }
        if self.order >= 2 {
            need(&self.k, "k")?;
        }
        if self.order >= 3 {
            need(&self.j, "j")?;
        }
        Ok(())
    }
}

/// Per-step coefficient tables; everything that depends only on (model, dt).
#[derive(Debug, Clone)]
pub struct StepTables {
    pub dt: f64,
    /// e^{a_k dt}
    phi0: Vec<f64>,
    /// (e^{a_k dt} - 1)/a_k, times r_k folded in: coefficient of G-forcing
    drift_coef: Vec<f64>,
    /// e^{a_k dt} r_k sqrt(dt) noise_scale: coefficient of a unit normal
    noise_coef: Vec<f64>,
    /// sqrt(dt)/r_k: weight increment coefficient of a unit normal
    weight_coef: Vec<f64>,
}

impl StepTables {
    pub fn new(model: &SpectralModel, dt: f64) -> Self {
        let n = model.dim();
        let mut phi0 = Vec::with_capacity(n);
        let mut drift_coef = Vec::with_capacity(n);
        let mut noise_coef = Vec::with_capacity(n);
        let mut weight_coef = Vec::with_capacity(n);
        let sdt = dt.sqrt();
        for k in 0..n {
            let a = model.a_eigs()[k];
            let r = model.r_eigs()[k];
            let e = (a * dt).exp();
            phi0.push(e);
            drift_coef.push((a * dt).exp_m1() / a * r);
            noise_coef.push(e * r * sdt * model.noise_scale());
            weight_coef.push(sdt / r);
        }
        StepTables {
            dt,
            phi0,
            drift_coef,
            noise_coef,
            weight_coef,
        }
    }
}

/// Live state of one path plus its variational ladder.
#[derive(Debug, Clone)]
pub struct PathState {
    pub t: f64,
    pub step: usize,
    pub x: Vec<f64>,
    pub d1h: Vec<f64>,
    pub d1k: Vec<f64>,
    pub d1j: Vec<f64>,
    pub d2hk: Vec<f64>,
    pub d2hj: Vec<f64>,
    pub d2kj: Vec<f64>,
    pub d3: Vec<f64>,
    pub w1: f64,
    pub w2hk: f64,
    pub w2hj: f64,
    pub w3: f64,
}

/// Scratch buffers reused across steps (no allocation in the step loop).
struct Scratch {
    xi: Vec<f64>,
    gx: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

/// A single path being advanced; owns its RNG lane.
pub struct PathSim<'m> {
    model: &'m SpectralModel,
    g: &'m Nonlinearity,
    tables: &'m StepTables,
    order: u8,
    pub state: PathState,
    rng: ChaCha8Rng,
    scratch: Scratch,
}

impl<'m> PathSim<'m> {
    /// Start a path at `x` with directions per `order` (see [`SimConfig`]).
    /// `lane` names the noise substream; see [`crate::rng::substream`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'m SpectralModel,
        g: &'m Nonlinearity,
        tables: &'m StepTables,
        order: u8,
        x: &[f64],
        h: Option<&[f64]>,
        k: Option<&[f64]>,
        j: Option<&[f64]>,
        master_seed: u64,
        lane: &[u64],
    ) -> Result<Self> {
        let n = model.dim();
        if x.len() != n {
            return Err(Error::argument(format!(
                "initial state: expected dimension {n}, got {}",
                x.len()
            )));
        }
        let zero = vec![0.0; n];
        let pick = |d: Option<&[f64]>, needed: bool, name: &str| -> Result<Vec<f64>> {
            match d {
                Some(v) if v.len() == n => Ok(v.to_vec()),
                Some(_) => Err(Error::argument(format!("direction {name} has wrong dimension"))),
                None if needed => Err(Error::argument(format!("missing direction {name}"))),
                None => Ok(zero.clone()),
            }
        };
        let d1h = pick(h, order >= 1, "h")?;
        let d1k = pick(k, order >= 2, "k")?;
        let d1j = pick(j, order >= 3, "j")?;
        let state = PathState {
            t: 0.0,
            step: 0,
            x: x.to_vec(),
            d1h,
            d1k,
            d1j,
            d2hk: zero.clone(),
            d2hj: zero.clone(),
            d2kj: zero.clone(),
            d3: zero.clone(),
            w1: 0.0,
            w2hk: 0.0,
            w2hj: 0.0,
            w3: 0.0,
        };
        Ok(PathSim {
            model,
            g,
            tables,
            order,
            state,
            rng: substream(master_seed, lane),
            scratch: Scratch {
                xi: vec![0.0; n],
                gx: vec![0.0; n],
                a: vec![0.0; n],
                b: vec![0.0; n],
                c: vec![0.0; n],
            },
        })
    }

    /// Advance one step. Weight accumulation reads the variational state
    /// at the left endpoint, against this step's noise increment.
    pub fn step(&mut self) -> Result<()> {
        let n = self.model.dim();
        let tab = self.tables;
        let st = &mut self.state;
        let sc = &mut self.scratch;

        for i in 0..n {
            sc.xi[i] = self.rng.sample::<f64, _>(StandardNormal);
        }

        // weights first (left-point rule): <d, R dW>_R = sum d_i dW_i / r_i
        if self.order >= 1 {
            let mut acc = 0.0;
            for i in 0..n {
                acc += st.d1h[i] * tab.weight_coef[i] * sc.xi[i];
            }
            st.w1 += acc;
        }
        if self.order >= 2 {
            let mut acc = 0.0;
            for i in 0..n {
                acc += st.d2hk[i] * tab.weight_coef[i] * sc.xi[i];
            }
            st.w2hk += acc;
        }
        if self.order >= 3 {
            let (mut a2, mut a3) = (0.0, 0.0);
            for i in 0..n {
                a2 += st.d2hj[i] * tab.weight_coef[i] * sc.xi[i];
                a3 += st.d3[i] * tab.weight_coef[i] * sc.xi[i];
            }
            st.w2hj += a2;
            st.w3 += a3;
        }

        // third-order forcing needs the most scratch; assemble it before
        // any state vector moves
        if self.order >= 3 {
            // c := D2G(X)(d1j, d2hk) + D2G(X)(d2hj, d1k) + D2G(X)(d1h, d2kj)
            //      + D3G(X)(d1h, d1k, d1j)
            self.g.d2_into(&st.x, &st.d1j, &st.d2hk, &mut sc.a);
            self.g.d2_into(&st.x, &st.d2hj, &st.d1k, &mut sc.b);
            for i in 0..n {
                sc.c[i] = sc.a[i] + sc.b[i];
            }
            self.g.d2_into(&st.x, &st.d1h, &st.d2kj, &mut sc.a);
            self.g.d3_into(&st.x, &st.d1h, &st.d1k, &st.d1j, &mut sc.b);
            for i in 0..n {
                sc.c[i] += sc.a[i] + sc.b[i];
            }
            // advance d3 drift part below after DG(X)d3 is available
        }

        // d3 update (uses DG(X) d3 + c)
        if self.order >= 3 {
            self.g.d1_into(&st.x, &st.d3, &mut sc.a);
            for i in 0..n {
                st.d3[i] = tab.phi0[i] * st.d3[i] + tab.drift_coef[i] * (sc.a[i] + sc.c[i]);
            }
        }

        // d2 updates: forcing DG(X) d2 + D2G(X)(d1, d1)
        if self.order >= 2 {
            self.g.d1_into(&st.x, &st.d2hk, &mut sc.a);
            self.g.d2_into(&st.x, &st.d1h, &st.d1k, &mut sc.b);
            for i in 0..n {
                st.d2hk[i] = tab.phi0[i] * st.d2hk[i] + tab.drift_coef[i] * (sc.a[i] + sc.b[i]);
            }
        }
        if self.order >= 3 {
            self.g.d1_into(&st.x, &st.d2hj, &mut sc.a);
            self.g.d2_into(&st.x, &st.d1h, &st.d1j, &mut sc.b);
            for i in 0..n {
                st.d2hj[i] = tab.phi0[i] * st.d2hj[i] + tab.drift_coef[i] * (sc.a[i] + sc.b[i]);
            }
            self.g.d1_into(&st.x, &st.d2kj, &mut sc.a);
            self.g.d2_into(&st.x, &st.d1k, &st.d1j, &mut sc.b);
            for i in 0..n {
                st.d2kj[i] = tab.phi0[i] * st.d2kj[i] + tab.drift_coef[i] * (sc.a[i] + sc.b[i]);
            }
        }

        // d1 updates: forcing DG(X) d1
        if self.order >= 1 {
            self.g.d1_into(&st.x, &st.d1h, &mut sc.a);
            for i in 0..n {
                st.d1h[i] = tab.phi0[i] * st.d1h[i] + tab.drift_coef[i] * sc.a[i];
            }
        }
        if self.order >= 2 {
            self.g.d1_into(&st.x, &st.d1k, &mut sc.a);
            for i in 0..n {
                st.d1k[i] = tab.phi0[i] * st.d1k[i] + tab.drift_coef[i] * sc.a[i];
            }
        }
        if self.order >= 3 {
            self.g.d1_into(&st.x, &st.d1j, &mut sc.a);
            for i in 0..n {
                st.d1j[i] = tab.phi0[i] * st.d1j[i] + tab.drift_coef[i] * sc.a[i];
            }
        }

        // state last (the forcings above used X at the left endpoint)
        self.g.eval_into(&st.x, &mut sc.gx);
        for i in 0..n {
            st.x[i] =
                tab.phi0[i] * st.x[i] + tab.drift_coef[i] * sc.gx[i] + tab.noise_coef[i] * sc.xi[i];
        }

        st.t += tab.dt;
        st.step += 1;

        for i in 0..n {
            if !st.x[i].is_finite() {
                return Err(Error::Simulation {
                    step: st.step,
                    what: format!("state component {i} became non-finite"),
                });
            }
        }
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Recorded output of [`simulate_path`]: the state trajectory, the primary
/// variational processes for the configured directions, and the running
/// weights, all on the uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: Vec<f64>,
    pub x_path: Vec<Vec<f64>>,
    pub delta1: Option<Vec<Vec<f64>>>,
    pub delta2: Option<Vec<Vec<f64>>>,
    pub delta3: Option<Vec<Vec<f64>>>,
    pub weight1: Option<Vec<f64>>,
    pub weight2: Option<Vec<f64>>,
    pub weight3: Option<Vec<f64>>,
    pub h: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
    pub j: Option<Vec<f64>>,
    pub path_index: u64,
    pub master_seed: u64,
}

/// Number of steps and effective dt: dt is nudged so the grid lands on
/// t_end exactly (m = round(t_end/dt), at least 1).
pub fn grid_steps(dt: f64, t_end: f64) -> (usize, f64) {
    let m = (t_end / dt).round().max(1.0) as usize;
    (m, t_end / m as f64)
}

/// Simulate one full path and record everything. Bit-deterministic in
/// (model, g, cfg, x, path_index): the noise lane is (master_seed,
/// [path_index]) regardless of scheduling.
pub fn simulate_path(
    model: &SpectralModel,
    g: &Nonlinearity,
    cfg: &SimConfig,
    x: &[f64],
    path_index: u64,
) -> Result<PathBundle> {
    cfg.validate(model)?;
    let (m, dt_eff) = grid_steps(cfg.dt, cfg.t_end);
    let tables = StepTables::new(model, dt_eff);
    let mut sim = PathSim::new(
        model,
        g,
        &tables,
        cfg.order,
        x,
        cfg.h.as_deref(),
        cfg.k.as_deref(),
        cfg.j.as_deref(),
        cfg.master_seed,
        &[path_index],
    )?;

    let mut grid = Vec::with_capacity(m + 1);
    let mut x_path = Vec::with_capacity(m + 1);
    let mut d1 = (cfg.order >= 1).then(|| Vec::with_capacity(m + 1));
    let mut d2 = (cfg.order >= 2).then(|| Vec::with_capacity(m + 1));
    let mut d3 = (cfg.order >= 3).then(|| Vec::with_capacity(m + 1));
    let mut w1 = (cfg.order >= 1).then(|| Vec::with_capacity(m + 1));
    let mut w2 = (cfg.order >= 2).then(|| Vec::with_capacity(m + 1));
    let mut w3 = (cfg.order >= 3).then(|| Vec::with_capacity(m + 1));

    let mut record = |sim: &PathSim, i: usize| {
        grid.push(i as f64 * dt_eff);
        x_path.push(sim.state.x.clone());
        if let Some(v) = d1.as_mut() {
            v.push(sim.state.d1h.clone());
        }
        if let Some(v) = d2.as_mut() {
            v.push(sim.state.d2hk.clone());
        }
        if let Some(v) = d3.as_mut() {
            v.push(sim.state.d3.clone());
        }
        if let Some(v) = w1.as_mut() {
            v.push(sim.state.w1);
        }
        if let Some(v) = w2.as_mut() {
            v.push(sim.state.w2hk);
        }
        if let Some(v) = w3.as_mut() {
            v.push(sim.state.w3);
        }
    };

    record(&sim, 0);
    for i in 1..=m {
        sim.step()?;
        record(&sim, i);
    }

    Ok(PathBundle {
        grid,
        x_path,
        delta1: d1,
        delta2: d2,
        delta3: d3,
        weight1: w1,
        weight2: w2,
        weight3: w3,
        h: cfg.h.clone(),
        k: cfg.k.clone(),
        j: cfg.j.clone(),
        path_index,
        master_seed: cfg.master_seed,
    })
}

/// One bound violation found by [`check_hreg_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub order: u8,
    pub time_index: usize,
    pub ratio: f64,
}

/// Result of the pathwise growth-bound check.
#[derive(Debug, Clone, Default)]
pub struct HregReport {
    pub violations: Vec<Violation>,
    /// Largest ratio seen per order (index 0 = order 1). 0 when untracked.
    pub max_ratio: [f64; 3],
}

/// Check the variational processes of one bundle against their growth
/// bounds in the weighted norm:
///
/// ```text
///   |d1(t)|_R <= e^{zeta t} |h|_R
///   |d2(t)|_R <= M2 K1(t, zeta) |h|_R |k|_R
///   |d3(t)|_R <= M3 K2(t, zeta) |h|_R |k|_R |j|_R
/// ```
///
/// A grid point violates at `tol` when ratio > 1 + tol. Vanishing bound
/// with vanishing value counts as ratio 0 (e.g. order 2 with G = 0, where
/// d2 is identically zero).
pub fn check_hreg_bounds(
    model: &SpectralModel,
    consts: &ModelConstants,
    bundle: &PathBundle,
    tol: f64,
) -> Result<HregReport> {
    let zeta = consts.zeta_r;
    let norm_of = |d: &Option<Vec<f64>>| -> Result<f64> {
        match d {
            Some(v) => model.hr_norm(v),
            None => Ok(0.0),
        }
    };
    let (nh, nk, nj) = (norm_of(&bundle.h)?, norm_of(&bundle.k)?, norm_of(&bundle.j)?);
    let mut report = HregReport::default();
    let tiny = 1e-300;

    let mut push = |order: u8, idx: usize, value: f64, bound: f64| {
        let ratio = if bound <= tiny {
            if value <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            value / bound
        };
        let slot = (order - 1) as usize;
        if ratio > report.max_ratio[slot] {
            report.max_ratio[slot] = ratio;
        }
        if ratio > 1.0 + tol {
            report.violations.push(Violation {
                order,
                time_index: idx,
                ratio,
            });
        }
    };

    for (idx, &t) in bundle.grid.iter().enumerate() {
        let kb = k_bounds(t, zeta)?;
        if let Some(d1) = &bundle.delta1 {
            let v = model.hr_norm(&d1[idx])?;
            push(1, idx, v, (zeta * t).exp() * nh);
        }
        if let Some(d2) = &bundle.delta2 {
            let v = model.hr_norm(&d2[idx])?;
            push(2, idx, v, consts.m2 * kb.k1 * nh * nk);
        }
        if let Some(d3) = &bundle.delta3 {
            let v = model.hr_norm(&d3[idx])?;
            push(3, idx, v, consts.m3 * kb.k2 * nh * nk * nj);
        }
    }
    Ok(report)
}

/// Pathwise Lipschitz probe: two solutions driven by the same noise from
/// different starting points; returns the largest over paths and grid
/// points of |X(t,x) - X(t,y)| / |x - y| (ambient norm).
pub fn lipschitz_probe(
    model: &SpectralModel,
    g: &Nonlinearity,
    cfg: &SimConfig,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let sep = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if sep == 0.0 {
        return Err(Error::argument(
            "lipschitz_probe: x and y must differ".to_string(),
        ));
    }
    let (m, dt_eff) = grid_steps(cfg.dt, cfg.t_end);
    let tables = StepTables::new(model, dt_eff);
    let worst = par_map_paths(cfg.n_paths, |p| -> Result<f64> {
        let mut sx = PathSim::new(
            model, g, &tables, 0, x, None, None, None, cfg.master_seed, &[p],
        )?;
        let mut sy = PathSim::new(
            model, g, &tables, 0, y, None, None, None, cfg.master_seed, &[p],
        )?;
        let mut best = 0.0_f64;
        for _ in 0..m {
            sx.step()?;
            sy.step()?;
            let d = sx
                .state
                .x
                .iter()
                .zip(&sy.state.x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.max(d / sep);
        }
        Ok(best)
    });
    let mut best = 0.0_f64;
    for w in worst {
        best = best.max(w?);
    }
    Ok(best)
}

/// Map path indices 0..n to values in a deterministic order. Parallelism
/// is an implementation detail: results come back indexed, so reductions
/// downstream are identical for any worker count.
pub fn par_map_paths<T: Send, F: Fn(u64) -> T + Sync + Send>(n_paths: u64, f: F) -> Vec<T> {
    (0..n_paths).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn desk() -> SpectralModel {
        SpectralModel::default_desk()
    }

    fn unit_h(model: &SpectralModel, mode: usize) -> Vec<f64> {
        // r_mode * e_mode has unit weighted norm
        let mut v = vec![0.0; model.dim()];
        v[mode] = model.r_eigs()[mode];
        v
    }

    fn x0(model: &SpectralModel) -> Vec<f64> {
        (0..model.dim()).map(|k| 0.3 / (k as f64 + 1.0)).collect()
    }

    #[test]
    fn deterministic_flow_without_forcing_is_exact() {
        // noise off, G = 0: X(t) = e^{tA} x to machine precision
        let model = SpectralModel::power_law(8, 2.0, 1.0, 0.5, 0.5, 0.0).unwrap();
        let g = Nonlinearity::zero();
        let cfg = SimConfig::plain(1e-2, 1.0, 1, 7);
        let b = simulate_path(&model, &g, &cfg, &x0(&model), 0).unwrap();
        let expect = model.apply_exp_a(1.0, &x0(&model)).unwrap();
        let last = b.x_path.last().unwrap();
        for i in 0..8 {
            assert_relative_eq!(last[i], expect[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn deterministic_flow_with_forcing_converges_first_order() {
        // noise off, radial G: global error O(dt) against a fine reference
        let model = SpectralModel::power_law(8, 2.0, 1.0, 0.5, 0.5, 0.0).unwrap();
        let g = Nonlinearity::radial_state(0.5).unwrap();
        let x = x0(&model);
        let run = |dt: f64| -> Vec<f64> {
            let cfg = SimConfig::plain(dt, 1.0, 1, 7);
            simulate_path(&model, &g, &cfg, &x, 0)
                .unwrap()
                .x_path
                .last()
                .unwrap()
                .clone()
        };
        let reference = run(1e-5);
        let err = |dt: f64| -> f64 {
            run(dt)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(4e-3), err(2e-3));
        let rate = e1 / e2;
        assert!(
            (1.6..=2.4).contains(&rate),
            "expected first-order decay, got ratio {rate} ({e1} vs {e2})"
        );
    }

    #[test]
    fn first_variation_without_nonlinearity_is_the_semigroup() {
        // G = 0: d1(t) = e^{tA} h exactly (zero forcing, exact linear part),
        // even with noise on -- d1 does not feel the noise.
        let model = desk();
        let g = Nonlinearity::zero();
        let h = unit_h(&model, 0);
        let cfg =
            SimConfig::plain(1e-2, 0.7, 1, 3).with_directions(1, Some(h.clone()), None, None);
        let b = simulate_path(&model, &g, &cfg, &x0(&model), 5).unwrap();
        let expect = model.apply_exp_a(0.7, &h).unwrap();
        let got = b.delta1.as_ref().unwrap().last().unwrap();
        for i in 0..8 {
            assert_relative_eq!(got[i], expect[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn bundles_are_bit_reproducible_across_scheduling() {
        let model = desk();
        let g = Nonlinearity::radial_state(0.1).unwrap();
        let h = unit_h(&model, 0);
        let k = unit_h(&model, 1);
        let j = unit_h(&model, 2);
        let cfg = SimConfig::plain(1e-2, 0.5, 4, 99).with_directions(
            3,
            Some(h),
            Some(k),
            Some(j),
        );
        let x = x0(&model);

        let run_with_threads = |threads: usize| -> Vec<PathBundle> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                par_map_paths(cfg.n_paths, |p| simulate_path(&model, &g, &cfg, &x, p).unwrap())
            })
        };

        let a = run_with_threads(1);
        let b = run_with_threads(3);
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa, pb, "bundle differs between thread counts");
        }
        // and different path indices genuinely differ
        assert_ne!(a[0].x_path.last(), a[1].x_path.last());
    }

    #[test]
    fn grid_lands_on_t_end() {
        let (m, dt) = grid_steps(1e-3, 2.0);
        assert_eq!(m, 2000);
        assert_relative_eq!(dt, 1e-3);
        // non-divisible dt gets nudged
        let (m, dt) = grid_steps(3e-3, 1.0);
        assert_eq!(m, 333);
        assert_relative_eq!(m as f64 * dt, 1.0);
    }

    #[test]
    fn growth_bounds_hold_on_sample_paths() {
        let model = desk();
        let g = Nonlinearity::radial_state(0.1).unwrap();
        let consts = model.compute_constants(g.m_bound()).unwrap();
        let cfg = SimConfig::plain(1e-3, 1.0, 1, 11).with_directions(
            3,
            Some(unit_h(&model, 0)),
            Some(unit_h(&model, 1)),
            Some(unit_h(&model, 2)),
        );
        for p in 0..20 {
            let b = simulate_path(&model, &g, &cfg, &x0(&model), p).unwrap();
            let rep = check_hreg_bounds(&model, &consts, &b, 0.02).unwrap();
            assert!(
                rep.violations.is_empty(),
                "violations on path {p}: {:?}, max ratios {:?}",
                &rep.violations[..rep.violations.len().min(3)],
                rep.max_ratio
            );
        }
    }

    #[test]
    fn zero_nonlinearity_kills_higher_variations() {
        // with G = 0 the second variation is identically zero and the
        // bound check reports ratio 0, not a 0/0 violation
        let model = desk();
        let g = Nonlinearity::zero();
        let consts = model.compute_constants(0.0).unwrap();
        let cfg = SimConfig::plain(1e-2, 0.5, 1, 2).with_directions(
            2,
            Some(unit_h(&model, 0)),
            Some(unit_h(&model, 1)),
            None,
        );
        let b = simulate_path(&model, &g, &cfg, &x0(&model), 0).unwrap();
        let d2 = b.delta2.as_ref().unwrap();
        assert!(d2.iter().all(|v| v.iter().all(|&c| c == 0.0)));
        let rep = check_hreg_bounds(&model, &consts, &b, 0.02).unwrap();
        assert!(rep.violations.is_empty());
        assert_eq!(rep.max_ratio[1], 0.0);
    }

    #[test]
    fn lipschitz_probe_contracts_for_negative_zeta() {
        let model = desk();
        let g = Nonlinearity::radial_state(0.1).unwrap();
        let cfg = SimConfig::plain(1e-2, 1.0, 8, 21);
        let x = x0(&model);
        let mut y = x.clone();
        y[0] += 0.5;
        y[2] -= 0.25;
        let lip = lipschitz_probe(&model, &g, &cfg, &x, &y).unwrap();
        assert!(lip > 0.0 && lip.is_finite());
        // zeta_R < 0 here; the flow should not expand separations much
        // beyond the |R|-weighted equivalence slack
        assert!(lip < 4.0, "lipschitz estimate {lip} unexpectedly large");
        assert!(lipschitz_probe(&model, &g, &cfg, &x, &x).is_err());
    }

    #[test]
    fn missing_direction_is_an_argument_error() {
        let model = desk();
        let g = Nonlinearity::zero();
        let cfg = SimConfig::plain(1e-2, 0.5, 1, 2).with_directions(2, Some(unit_h(&model, 0)), None, None);
        assert!(simulate_path(&model, &g, &cfg, &x0(&model), 0).is_err());
    }
}
