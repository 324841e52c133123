//! Physical constants and unit conversions.
//!
//! Everything inside the crate runs in SI: watts, seconds, amperes and
//! angular frequency in rad/s. Config files speak dBm and MHz; these helpers
//! are the only place those get translated.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant (J·s), exact SI value.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant (J·s), exact SI value.
pub const H_PLANCK: f64 = 6.626_070_15e-34;

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> Result<f64> {
    if !(p_w > 0.0) || !p_w.is_finite() {
        return Err(Error::InvalidInput(format!(
            "power must be positive to express in dBm, got {p_w} W"
        )));
    }
    Ok(10.0 * p_w.log10() + 30.0)
}

/// Hz to rad/s.
#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// rad/s to Hz.
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Photon flux (photons/s) carried by a tone of power `p_w` at angular frequency `omega`.
pub fn photon_flux(p_w: f64, omega: f64) -> f64 {
    p_w / (HBAR * omega)
}
