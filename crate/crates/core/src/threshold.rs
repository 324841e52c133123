//! Self-oscillation threshold: the analytic boundary map and a simulation cross-check.
//!
//! Two closed forms live here. [`pth_analytic`] is the approximate formula
//!
//! ```text
//! P_th = (α_p Z_p / 2) · [(Δ_p/2)² + (ω0²/4)(Q_i⁻¹ + Q_c⁻¹)²]
//!                      / [(3/16) I_DC² ω0² / I*⁴ − (1/8) ω0 Δ_p / I*²]
//! ```
//!
//! used to draw boundary maps. [`pth_boundary`] solves `ζ² = Δ² + γ̄²` exactly
//! for the operating-point model the integrator runs on. The two differ: the
//! approximate form carries a `−2δ_p δ_DC` cross term in its expansion of Δ²
//! that the exact detuning `Δ = −Δ_p/2 + δ_p + K` does not produce, which is
//! where its 3/16 (rather than 1/16) comes from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{Bias, DeviceParams, OperatingPoint, TlsModel};
use crate::dynamics::{
    integrate_observed, ConstantSchedule, DeviceResolver, Flow, IntegratorConfig, NoiseConfig,
    PumpState, QuadratureState, Resolver, SimState,
};
use crate::error::{Error, Result};

/// Approximate threshold pump power (W) at pump detuning `delta_p = ω_p − 2ω0(I_DC)`.
pub fn pth_analytic(delta_p: f64, i_dc: f64, q_i: f64, dev: &DeviceParams) -> Result<f64> {
    if !(q_i > 0.0) {
        return Err(Error::InvalidInput(format!(
            "q_i must be positive, got {q_i}"
        )));
    }
    let w0 = dev.omega0_zero;
    let is2 = dev.i_star * dev.i_star;
    let loss = 1.0 / q_i + 1.0 / dev.q_c;
    let numerator = (0.5 * delta_p).powi(2) + 0.25 * w0 * w0 * loss * loss;
    let denominator = 3.0 / 16.0 * i_dc * i_dc * w0 * w0 / (is2 * is2) - 0.125 * w0 * delta_p / is2;
    if !(denominator > 0.0) {
        return Err(Error::NoFiniteThreshold { denominator });
    }
    Ok(0.5 * dev.alpha_p * dev.z_p * numerator / denominator)
}

/// Exact onset power of the simulated model: smallest `P_p` with `ζ² = Δ² + γ̄²`.
pub fn pth_boundary(delta_p: f64, i_dc: f64, q_i: f64, dev: &DeviceParams) -> Result<f64> {
    let base = OperatingPoint::derive(
        dev,
        Bias::with_pump_detuning(dev, i_dc, 0.0, delta_p, 0.0),
        q_i,
    )?;
    // per unit delivered power: ζ² = c1·P, δ_p = −c2·P
    let is2 = dev.i_star * dev.i_star;
    let c1 = (0.25 * i_dc * dev.omega0_zero / is2).powi(2) * 2.0 / dev.z_p;
    let c2 = 0.125 * 2.0 / dev.z_p * dev.omega0_zero / is2;
    let d0 = base.delta_big;
    let (a, b, c) = (
        c2 * c2,
        -(2.0 * d0 * c2 + c1),
        d0 * d0 + base.gamma_bar.powi(2),
    );
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) || c1 == 0.0 {
        return Err(Error::NoFiniteThreshold { denominator: disc });
    }
    // smaller root, written to avoid cancellation
    let q = -0.5 * (b - disc.sqrt());
    let delivered = c / q;
    if !(delivered > 0.0) {
        return Err(Error::NoFiniteThreshold { denominator: q });
    }
    Ok(delivered * dev.alpha_p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMap {
    pub delta_p_grid: Vec<f64>,
    /// `None` where no finite threshold exists.
    pub p_th: Vec<Option<f64>>,
    pub q_i_assumed: f64,
    pub i_dc: f64,
    pub device: DeviceParams,
}

impl ThresholdMap {
    /// Grid index of the lowest finite threshold.
    pub fn argmin(&self) -> Option<usize> {
        self.p_th
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.map(|v| (k, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }
}

/// One analytic threshold curve per `q_i`.
pub fn boundary_map(
    delta_p_grid: &[f64],
    i_dc: f64,
    q_i_list: &[f64],
    dev: &DeviceParams,
) -> Result<Vec<ThresholdMap>> {
    if delta_p_grid.is_empty() || q_i_list.is_empty() {
        return Err(Error::InvalidInput(
            "boundary map needs a non-empty detuning grid and q_i list".into(),
        ));
    }
    q_i_list
        .iter()
        .map(|&q_i| {
            let p_th = delta_p_grid
                .iter()
                .map(|&d| match pth_analytic(d, i_dc, q_i, dev) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::NoFiniteThreshold { .. }) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ThresholdMap {
                delta_p_grid: delta_p_grid.to_vec(),
                p_th,
                q_i_assumed: q_i,
                i_dc,
                device: *dev,
            })
        })
        .collect()
}

/// Settings for the bisection in [`pth_numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericThresholdConfig {
    pub p_min: f64,
    pub p_max: f64,
    /// Stop once `p_hi/p_lo − 1` falls below this.
    pub rel_width: f64,
    pub n_osc_threshold: f64,
    /// Noise scale η; kept tiny so the onset is set by the drift.
    pub eta: f64,
    /// Amplitude of the random initial kick.
    pub kick: f64,
    /// Integrator `rate·dt`.
    pub rate_dt: f64,
    /// Trial duration in units of `1/(γ̄·rel_width)`.
    pub duration_factor: f64,
    pub seed: u64,
}

impl Default for NumericThresholdConfig {
    fn default() -> Self {
        Self {
            p_min: 1e-12,
            p_max: 1e-3,
            rel_width: 1e-3,
            n_osc_threshold: 1e3,
            eta: 1e-8,
            kick: 0.1,
            rate_dt: 0.05,
            duration_factor: 30.0,
            seed: 0x5eed,
        }
    }
}

/// Does a run at pump power `p` reach the oscillation threshold? `duration` of `None` uses the config rule.
pub fn oscillates_at(
    p: f64,
    delta_p: f64,
    i_dc: f64,
    q_i: f64,
    dev: &DeviceParams,
    cfg: &NumericThresholdConfig,
    seed: u64,
    duration: Option<f64>,
) -> Result<bool> {
    let dev = DeviceParams {
        tls: TlsModel::fixed(q_i),
        ..*dev
    };
    let resolver = DeviceResolver {
        device: dev,
        i_dc,
        pump_detuning: delta_p,
    };
    let pump = PumpState {
        p_pump: p,
        phi_pump: 0.0,
    };
    let op = resolver.resolve(Some(pump))?;
    let rate = op.gamma_bar.max(op.delta_big.abs()).max(op.zeta_mag);
    let dt = cfg.rate_dt / rate;
    let duration = duration.unwrap_or(cfg.duration_factor / (op.gamma_bar * cfg.rel_width));
    let integrator = IntegratorConfig::new(
        dt,
        NoiseConfig {
            noise_rate: 0.5,
            eta: cfg.eta,
        },
        None,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kick = QuadratureState::new(
        cfg.kick * (rng.random::<f64>() - 0.5),
        cfg.kick * (rng.random::<f64>() - 0.5),
    );
    let mut hit = false;
    integrate_observed(
        &ConstantSchedule::new(duration, Some(pump)),
        &resolver,
        &integrator,
        &mut rng,
        SimState {
            quad: kick,
            n_filtered: 0.0,
        },
        |v| {
            if v.state.nbar() > cfg.n_osc_threshold {
                hit = true;
                Flow::Stop
            } else {
                Flow::Continue
            }
        },
    )?;
    Ok(hit)
}

/// Onset power found by simulation: bisection in log power between a quiet and an oscillating trial.
pub fn pth_numeric(
    delta_p: f64,
    i_dc: f64,
    q_i: f64,
    dev: &DeviceParams,
    cfg: &NumericThresholdConfig,
) -> Result<f64> {
    let not_found = || Error::BracketNotFound {
        p_min: cfg.p_min,
        p_max: cfg.p_max,
    };
    let trial = |p: f64| oscillates_at(p, delta_p, i_dc, q_i, dev, cfg, cfg.seed, None);
    if trial(cfg.p_min)? || !trial(cfg.p_max)? {
        return Err(not_found());
    }
    let (mut lo, mut hi) = (cfg.p_min, cfg.p_max);
    while hi / lo - 1.0 > cfg.rel_width {
        let mid = (lo * hi).sqrt();
        if trial(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// [`pth_numeric`] over a detuning grid, in parallel.
pub fn pth_numeric_grid(
    delta_p_grid: &[f64],
    i_dc: f64,
    q_i: f64,
    dev: &DeviceParams,
    cfg: &NumericThresholdConfig,
) -> Vec<Result<f64>> {
    delta_p_grid
        .par_iter()
        .map(|&d| pth_numeric(d, i_dc, q_i, dev, cfg))
        .collect()
}
