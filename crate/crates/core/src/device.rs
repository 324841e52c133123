//! Device constants and the Hamiltonian parameters they imply.
//!
//! The resonator is a current-biased kinetic-inductance line. A DC bias
//! `I_DC` shifts the resonance down quadratically and, together with a pump
//! tone at roughly twice the resonance, produces three-wave mixing of
//! strength `ζ ∝ I_DC·I_p`. All rates are angular (rad/s).
//!
//! Sign convention for ζ: the closed form carries a leading minus,
//! `ζ = −(1/4)(I_DC I_p / I*²) ω0 e^{−iφ_p}`. We store it as a
//! non-negative magnitude plus `phase = −φ_p`, so that the complex value is
//! `ζ = −|ζ| e^{i·phase}`. The leading minus is a fixed π offset of the pump
//! phase reference and never appears anywhere else.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::units::HBAR;

/// Power-saturation law for the internal quality factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsModel {
    /// Low-power limit of `Q_i`.
    pub q_i_floor: f64,
    /// Fully saturated limit of `Q_i`.
    pub q_i_ceiling: f64,
    /// Photon number at which saturation sets in.
    pub n_critical: f64,
    pub exponent: f64,
}

impl TlsModel {
    /// A model with no power dependence.
    pub fn fixed(q_i: f64) -> Self {
        Self {
            q_i_floor: q_i,
            q_i_ceiling: q_i,
            n_critical: 1.0,
            exponent: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_i_floor > 0.0 && self.q_i_floor <= self.q_i_ceiling) {
            return Err(Error::InvalidInput(format!(
                "TLS model needs 0 < q_i_floor <= q_i_ceiling, got {} and {}",
                self.q_i_floor, self.q_i_ceiling
            )));
        }
        if !(self.n_critical > 0.0 && self.exponent > 0.0) {
            return Err(Error::InvalidInput(
                "TLS n_critical and exponent must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn is_fixed(&self) -> bool {
        self.q_i_floor == self.q_i_ceiling
    }
}

impl Default for TlsModel {
    fn default() -> Self {
        Self {
            q_i_floor: 4.7e3,
            q_i_ceiling: 29e3,
            n_critical: 1.0,
            exponent: 0.5,
        }
    }
}

/// Static device constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Resonance at zero bias (rad/s).
    pub omega0_zero: f64,
    /// Nonlinearity current scale (A).
    pub i_star: f64,
    pub q_c: f64,
    pub tls: TlsModel,
    /// Impedance seen by the pump (Ω).
    pub z_p: f64,
    /// Pump-transmission ripple factor; the delivered pump power is `P_p / alpha_p`.
    pub alpha_p: f64,
    /// Total inductance (H).
    pub l_total: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega0_zero", self.omega0_zero),
            ("i_star", self.i_star),
            ("q_c", self.q_c),
            ("z_p", self.z_p),
            ("alpha_p", self.alpha_p),
            ("l_total", self.l_total),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        self.tls.validate()
    }
}

/// DC shift of the resonance, `−(1/2)(I_DC/I*)² ω0`.
pub fn delta_dc(i_dc: f64, dev: &DeviceParams) -> f64 {
    -0.5 * (i_dc / dev.i_star).powi(2) * dev.omega0_zero
}

/// Pump-induced shift, `−(1/8)(I_p/I*)² ω0` with `I_p² = 2P_p/Z_p`.
pub fn delta_p(p_pump: f64, dev: &DeviceParams) -> Result<f64> {
    if !(p_pump >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "pump power must be non-negative, got {p_pump} W"
        )));
    }
    let ip_sq = 2.0 * p_pump / dev.z_p;
    Ok(-0.125 * ip_sq / dev.i_star.powi(2) * dev.omega0_zero)
}

/// Kerr rate, `−(3/8)(ħω0/(L_T I*²)) ω0`.
pub fn kerr(dev: &DeviceParams) -> f64 {
    -0.375 * HBAR * dev.omega0_zero / (dev.l_total * dev.i_star.powi(2)) * dev.omega0_zero
}

/// Three-wave mixing strength as (magnitude, phase); see the module docs for the phase convention.
pub fn zeta(i_dc: f64, p_pump: f64, phi_pump: f64, dev: &DeviceParams) -> Result<(f64, f64)> {
    if !(i_dc >= 0.0) || !(p_pump >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "zeta needs non-negative bias and pump, got i_dc = {i_dc} A, p_pump = {p_pump} W"
        )));
    }
    let i_p = (2.0 * p_pump / dev.z_p).sqrt();
    let magnitude = 0.25 * i_dc * i_p / dev.i_star.powi(2) * dev.omega0_zero;
    Ok((magnitude, wrap_phase(-phi_pump)))
}

/// Complex ζ reconstructed from the (magnitude, phase) pair.
pub fn zeta_complex(magnitude: f64, phase: f64) -> Complex64 {
    -Complex64::from_polar(magnitude, phase)
}

/// Biased resonance `ω0(0)[1 − I_DC²/(2I*²)]`.
pub fn omega0_of_idc(i_dc: f64, dev: &DeviceParams) -> f64 {
    dev.omega0_zero + delta_dc(i_dc, dev)
}

/// Least-squares fit of `ω0(I) = ω0(0) − b·I²`; returns `(omega0_zero, i_star)`.
pub fn fit_i_star(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Underdetermined(
            "need at least two bias points".into(),
        ));
    }
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(i, w) in samples {
        let x = i * i;
        sx += x;
        sy += w;
        sxx += x * x;
        sxy += x * w;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() <= f64::EPSILON * sxx * n {
        return Err(Error::Underdetermined(
            "bias points must have distinct |I_DC|".into(),
        ));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    if !(slope < 0.0) {
        return Err(Error::FitDiverged(format!(
            "frequency does not decrease with bias (slope {slope:e})"
        )));
    }
    Ok((intercept, (-intercept / (2.0 * slope)).sqrt()))
}

/// `Q_i(n̄)` from the TLS saturation law.
pub fn q_i_of_nbar(nbar: f64, tls: &TlsModel) -> f64 {
    let n = nbar.max(0.0);
    let inv_floor = 1.0 / tls.q_i_floor;
    let inv_ceiling = 1.0 / tls.q_i_ceiling;
    let inv =
        (inv_floor - inv_ceiling) / (1.0 + n / tls.n_critical).powf(tls.exponent) + inv_ceiling;
    1.0 / inv
}

pub fn loaded_q(q_i: f64, q_c: f64) -> f64 {
    1.0 / (1.0 / q_i + 1.0 / q_c)
}

/// Mean intracavity photon number `2 Q_L² P0 / (ħ ω0² Q_c)` for fixed quality factors.
pub fn nbar_from_power(p0: f64, omega0: f64, q_i: f64, q_c: f64) -> Result<f64> {
    if !(p0 >= 0.0) || !(omega0 > 0.0) || !(q_i > 0.0) || !(q_c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "nbar_from_power needs p0 >= 0 and positive omega0, q_i, q_c (got {p0}, {omega0}, {q_i}, {q_c})"
        )));
    }
    let q_l = loaded_q(q_i, q_c);
    Ok(2.0 * q_l * q_l * p0 / (HBAR * omega0 * omega0 * q_c))
}

const NBAR_MAX_ITER: usize = 1000;
const NBAR_REL_TOL: f64 = 1e-9;
const NBAR_DAMPING: f64 = 0.5;

/// Self-consistent photon number when `Q_i` itself depends on `n̄` through the TLS law.
///
/// Returns `(nbar, q_i)`. Uses damped fixed-point iteration.
pub fn nbar_self_consistent(p0: f64, omega0: f64, tls: &TlsModel, q_c: f64) -> Result<(f64, f64)> {
    let mut n = nbar_from_power(p0, omega0, tls.q_i_floor, q_c)?;
    if n == 0.0 {
        return Ok((0.0, tls.q_i_floor));
    }
    let mut last_change = f64::INFINITY;
    for _ in 0..NBAR_MAX_ITER {
        let target = nbar_from_power(p0, omega0, q_i_of_nbar(n, tls), q_c)?;
        let next = (1.0 - NBAR_DAMPING) * n + NBAR_DAMPING * target;
        last_change = ((next - n) / next).abs();
        n = next;
        if last_change < NBAR_REL_TOL {
            return Ok((n, q_i_of_nbar(n, tls)));
        }
    }
    Err(Error::FixedPointDiverged {
        iterations: NBAR_MAX_ITER,
        last_change,
    })
}

/// Bias and pump settings that select an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bias {
    pub i_dc: f64,
    /// Pump power at the device input (W).
    pub p_pump: f64,
    pub omega_pump: f64,
    pub phi_pump: f64,
}

impl Bias {
    /// Pump placed at `2ω0(I_DC) + pump_detuning`.
    pub fn with_pump_detuning(
        dev: &DeviceParams,
        i_dc: f64,
        p_pump: f64,
        pump_detuning: f64,
        phi_pump: f64,
    ) -> Self {
        Self {
            i_dc,
            p_pump,
            omega_pump: 2.0 * omega0_of_idc(i_dc, dev) + pump_detuning,
            phi_pump,
        }
    }

    /// `Δ_p = ω_p − 2ω0(I_DC)`.
    pub fn pump_detuning(&self, dev: &DeviceParams) -> f64 {
        self.omega_pump - 2.0 * omega0_of_idc(self.i_dc, dev)
    }
}

/// Rotating-frame Hamiltonian parameters for one bias/pump setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub bias: Bias,
    pub q_i: f64,
    /// Biased resonance ω0(I_DC).
    pub omega0: f64,
    pub delta_dc: f64,
    pub delta_p: f64,
    pub kerr: f64,
    pub zeta_mag: f64,
    pub zeta_phase: f64,
    /// Detuning Δ of ω_p/2 from the pump-shifted resonance.
    pub delta_big: f64,
    /// Port coupling ω0/Q_c.
    pub kappa: f64,
    /// Internal loss ω0/Q_i.
    pub gamma: f64,
    /// (κ + γ)/2.
    pub gamma_bar: f64,
}

impl OperatingPoint {
    pub fn derive(dev: &DeviceParams, bias: Bias, q_i: f64) -> Result<Self> {
        if !(q_i > 0.0) {
            return Err(Error::InvalidInput(format!(
                "q_i must be positive, got {q_i}"
            )));
        }
        let delivered = bias.p_pump / dev.alpha_p;
        let d_dc = delta_dc(bias.i_dc, dev);
        let d_p = delta_p(delivered, dev)?;
        let k = kerr(dev);
        let (zeta_mag, zeta_phase) = zeta(bias.i_dc, delivered, bias.phi_pump, dev)?;
        let omega0 = dev.omega0_zero + d_dc;
        let kappa = omega0 / dev.q_c;
        let gamma = omega0 / q_i;
        Ok(Self {
            bias,
            q_i,
            omega0,
            delta_dc: d_dc,
            delta_p: d_p,
            kerr: k,
            zeta_mag,
            zeta_phase,
            delta_big: dev.omega0_zero + d_dc + d_p + k - 0.5 * bias.omega_pump,
            kappa,
            gamma,
            gamma_bar: 0.5 * (kappa + gamma),
        })
    }

    /// Bare rates, bypassing the device model. Used for synthetic dynamics checks.
    pub fn synthetic(delta: f64, zeta: f64, kerr: f64, kappa: f64, gamma: f64) -> Self {
        Self {
            bias: Bias {
                i_dc: 0.0,
                p_pump: 0.0,
                omega_pump: 0.0,
                phi_pump: 0.0,
            },
            q_i: f64::INFINITY,
            omega0: 0.0,
            delta_dc: 0.0,
            delta_p: 0.0,
            kerr,
            zeta_mag: zeta.abs(),
            zeta_phase: 0.0,
            delta_big: delta,
            kappa,
            gamma,
            gamma_bar: 0.5 * (kappa + gamma),
        }
    }

    /// Same point with a new internal quality factor; only γ and γ̄ change.
    pub fn with_q_i(&self, q_i: f64) -> Self {
        let mut out = *self;
        out.q_i = q_i;
        out.gamma = self.omega0 / q_i;
        out.gamma_bar = 0.5 * (out.kappa + out.gamma);
        out
    }

    /// Same point with the pump switched off.
    pub fn pump_off(&self) -> Self {
        let mut out = *self;
        out.bias.p_pump = 0.0;
        out.delta_big -= self.delta_p;
        out.delta_p = 0.0;
        out.zeta_mag = 0.0;
        out
    }

    /// `ζ² > Δ² + γ̄²`.
    pub fn above_boundary(&self) -> bool {
        self.zeta_mag.powi(2) > self.delta_big.powi(2) + self.gamma_bar.powi(2)
    }
}

pub(crate) fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::units::hz_to_angular;

    /// Device constants at the values the measured device was modelled with.
    pub fn device() -> DeviceParams {
        DeviceParams {
            omega0_zero: hz_to_angular(7.776e9),
            i_star: 21.5e-3,
            q_c: 220e3,
            tls: TlsModel::default(),
            z_p: 33.0,
            alpha_p: 1.3,
            l_total: 2e-9,
        }
    }

    pub fn device_at(f0_hz: f64) -> DeviceParams {
        DeviceParams {
            omega0_zero: hz_to_angular(f0_hz),
            ..device()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::units::{angular_to_hz, dbm_to_watts, hz_to_angular};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dc_shift() {
        let dev = device();
        assert_eq!(delta_dc(0.0, &dev), 0.0);
        assert_relative_eq!(
            angular_to_hz(delta_dc(2.0e-3, &dev)),
            -33.644e6,
            max_relative = 1e-4
        );
        // quadratic model under-predicts the measured 246 MHz at 4.89 mA
        assert_relative_eq!(
            angular_to_hz(delta_dc(4.89e-3, &dev)),
            -201.13e6,
            max_relative = 1e-4
        );
    }

    #[test]
    fn pump_shift() {
        let dev = device_at(7.7e9);
        let d = angular_to_hz(delta_p(dbm_to_watts(-33.0), &dev).unwrap());
        assert!((d.abs() - 64e3).abs() / 64e3 < 0.03, "{d}");
        assert!(d < 0.0);
        assert_eq!(delta_p(0.0, &dev).unwrap(), 0.0);
        assert_relative_eq!(
            angular_to_hz(delta_p(dbm_to_watts(-51.2), &dev).unwrap()),
            -957.3,
            max_relative = 1e-3
        );
        assert!(delta_p(-1e-9, &dev).is_err());
    }

    #[test]
    fn kerr_magnitude() {
        let dev = device_at(7.7e9);
        assert_relative_eq!(angular_to_hz(kerr(&dev)), -0.015_935, max_relative = 1e-3);
        let loose = DeviceParams {
            l_total: 1e12,
            ..dev
        };
        assert!(kerr(&loose).abs() < 1e-20);
        for i in 0..=50 {
            let l = 0.05e-9 + (10e-9 - 0.05e-9) * i as f64 / 50.0;
            let k = angular_to_hz(kerr(&DeviceParams { l_total: l, ..dev }));
            assert!(k < 0.0 && k.abs() < 1.0, "L_T = {l}: K/2pi = {k}");
        }
    }

    #[test]
    fn zeta_values_and_zeros() {
        let dev = device_at(7.742e9);
        assert_eq!(zeta(0.0, 1e-6, 0.0, &dev).unwrap().0, 0.0);
        assert_eq!(zeta(2e-3, 0.0, 0.0, &dev).unwrap().0, 0.0);
        let (m, _) = zeta(2.0e-3, dbm_to_watts(-51.2), 0.0, &dev).unwrap();
        assert_relative_eq!(angular_to_hz(m), 179.56e3, max_relative = 1e-3);
        assert!(zeta(-1e-3, 1e-9, 0.0, &dev).is_err());
        assert!(zeta(1e-3, -1e-9, 0.0, &dev).is_err());
    }

    #[test]
    fn zeta_matches_raw_complex_formula() {
        let dev = device();
        for &(i_dc, p, phi) in &[
            (2e-3, 1e-8, 0.3),
            (1e-3, 3e-9, 2.9),
            (4e-3, 5e-8, -1.1),
            (0.5e-3, 2e-7, 6.0),
        ] {
            let (m, ph) = zeta(i_dc, p, phi, &dev).unwrap();
            let i_p = (2.0 * p / dev.z_p).sqrt();
            let raw = Complex64::new(
                -0.25 * i_dc * i_p / dev.i_star.powi(2) * dev.omega0_zero,
                0.0,
            ) * Complex64::from_polar(1.0, -phi);
            let ours = zeta_complex(m, ph);
            assert!((ours - raw).norm() < 1e-12 * raw.norm(), "{ours} vs {raw}");
            assert_relative_eq!(ph, wrap_phase(-phi), epsilon = 1e-15);
        }
    }

    #[test]
    fn biased_resonance() {
        let dev = device();
        assert_relative_eq!(
            omega0_of_idc(0.0, &dev),
            hz_to_angular(7.776e9),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            angular_to_hz(omega0_of_idc(2.0e-3, &dev)),
            7.742_36e9,
            max_relative = 1e-6
        );
        assert_eq!(omega0_of_idc(1.3e-3, &dev), omega0_of_idc(-1.3e-3, &dev));
    }

    #[test]
    fn i_star_round_trip() {
        let dev = device();
        let samples: Vec<_> = (0..25)
            .map(|k| {
                let i = 0.2e-3 * k as f64;
                (i, omega0_of_idc(i, &dev))
            })
            .collect();
        let (w0, i_star) = fit_i_star(&samples).unwrap();
        assert!((i_star - 21.5e-3).abs() / 21.5e-3 < 1e-3);
        assert_relative_eq!(w0, dev.omega0_zero, max_relative = 1e-9);
        assert!(fit_i_star(&samples[..1]).is_err());
    }

    #[test]
    fn tls_limits() {
        let tls = TlsModel::default();
        assert_relative_eq!(q_i_of_nbar(0.0, &tls), 4.7e3, max_relative = 1e-12);
        assert_relative_eq!(q_i_of_nbar(1e30, &tls), 29e3, max_relative = 1e-9);
        // values stay inside [floor, ceiling] over the measured photon range
        let mut prev = 0.0;
        for k in 0..=200 {
            let nbar = 10f64.powf(-2.0 + 7.477 * k as f64 / 200.0);
            let q = q_i_of_nbar(nbar, &tls);
            assert!((4.7e3..=29e3).contains(&q));
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn nbar_fixed_q() {
        assert_eq!(nbar_from_power(0.0, 1.0, 1e4, 2e5).unwrap(), 0.0);
        let n = nbar_from_power(dbm_to_watts(-116.4), hz_to_angular(7.742e9), 1e4, 2e5).unwrap();
        assert_relative_eq!(n, 8.3268, max_relative = 1e-4);
        assert!(nbar_from_power(-1.0, 1.0, 1e4, 2e5).is_err());
        let mut prev = -1.0;
        for k in 0..50 {
            let n = nbar_from_power(
                dbm_to_watts(-140.0 + k as f64),
                hz_to_angular(7.742e9),
                1e4,
                2e5,
            )
            .unwrap();
            assert!(n > prev);
            prev = n;
        }
    }

    #[test]
    fn nbar_self_consistent_is_a_bracketed_unique_root() {
        let tls = TlsModel::default();
        let w0 = hz_to_angular(7.742e9);
        for p_dbm in [-140.0, -125.0, -116.4, -100.0, -80.0] {
            let p0 = dbm_to_watts(p_dbm);
            let (n, q) = nbar_self_consistent(p0, w0, &tls, 220e3).unwrap();
            let residual =
                |m: f64| nbar_from_power(p0, w0, q_i_of_nbar(m, &tls), 220e3).unwrap() - m;
            assert!(residual(n).abs() < 1e-6 * n.max(1.0));
            assert_relative_eq!(q, q_i_of_nbar(n, &tls), max_relative = 1e-12);
            // exactly one sign change of the residual on a dense log grid
            let grid: Vec<f64> = (0..=600)
                .map(|k| 10f64.powf(-6.0 + 14.0 * k as f64 / 600.0))
                .collect();
            let changes = grid
                .windows(2)
                .filter(|w| residual(w[0]).signum() != residual(w[1]).signum())
                .count();
            assert_eq!(changes, 1, "p0 = {p_dbm} dBm");
        }
    }

    #[test]
    fn operating_point_is_idempotent() {
        let dev = device();
        let bias = Bias::with_pump_detuning(&dev, 2e-3, 1e-7, hz_to_angular(0.2e6), 0.7);
        let a = OperatingPoint::derive(&dev, bias, 1.8e4).unwrap();
        let b = OperatingPoint::derive(&dev, bias, 1.8e4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.with_q_i(1.8e4), a);
        assert_relative_eq!(a.zeta_phase, wrap_phase(-0.7), epsilon = 1e-15);
        assert_relative_eq!(
            bias.pump_detuning(&dev),
            hz_to_angular(0.2e6),
            max_relative = 1e-6
        );
        // Δ = −Δ_p/2 + δ_p + K once the DC shift is folded into ω0(I_DC)
        let expected = -0.5 * bias.pump_detuning(&dev) + a.delta_p + a.kerr;
        assert!((a.delta_big - expected).abs() < 1e-6 * a.gamma_bar);
    }

    proptest! {
        #[test]
        fn homogeneity(i in 1e-5f64..5e-3, p in 1e-12f64..1e-6, lambda in 0.1f64..10.0) {
            let dev = device();
            let rel = |a: f64, b: f64| ((a - b) / b).abs();
            prop_assert!(rel(delta_dc(lambda * i, &dev), lambda * lambda * delta_dc(i, &dev)) < 1e-12);
            let z = zeta(i, p, 0.0, &dev).unwrap().0;
            prop_assert!(rel(zeta(lambda * i, p, 0.0, &dev).unwrap().0, lambda * z) < 1e-12);
            prop_assert!(rel(zeta(i, lambda * p, 0.0, &dev).unwrap().0, lambda.sqrt() * z) < 1e-12);
            prop_assert!(rel(delta_p(lambda * p, &dev).unwrap(), lambda * delta_p(p, &dev).unwrap()) < 1e-12);
        }

        #[test]
        fn resonance_even_and_maximal_at_zero(i in -10e-3f64..10e-3) {
            let dev = device();
            prop_assert_eq!(omega0_of_idc(i, &dev), omega0_of_idc(-i, &dev));
            prop_assert!(omega0_of_idc(i, &dev) <= omega0_of_idc(0.0, &dev));
        }

        #[test]
        fn q_i_monotone_bounded(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let tls = TlsModel::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (qa, qb) = (q_i_of_nbar(lo, &tls), q_i_of_nbar(hi, &tls));
            prop_assert!(qa <= qb);
            prop_assert!(qa >= tls.q_i_floor * (1.0 - 1e-12) && qb <= tls.q_i_ceiling * (1.0 + 1e-12));
        }
    }
}
