//! One-port reflection model and fitting.
//!
//! Convention: with `x = 2(ω − ω0)/ω0`,
//!
//! ```text
//! S11(ω) = [(Q_c⁻¹ − Q_i⁻¹) − i x] / [(Q_c⁻¹ + Q_i⁻¹) + i x]
//! ```
//!
//! so `S11 → −1` far from resonance and `S11(ω0)` is real, negative when undercoupled.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::protocol::csv_err;
use crate::units::hz_to_angular;

pub fn s11_model(omega: f64, omega0: f64, q_i: f64, q_c: f64) -> Complex64 {
    let x = 2.0 * (omega - omega0) / omega0;
    Complex64::new(1.0 / q_c - 1.0 / q_i, -x) / Complex64::new(1.0 / q_c + 1.0 / q_i, x)
}

/// Fraction of incident power absorbed on resonance, `1 − |S11(ω0)|²`.
pub fn absorbed_fraction(q_i: f64, q_c: f64) -> f64 {
    1.0 - s11_model(1.0, 1.0, q_i, q_c).norm_sqr()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSpectrum {
    pub freqs_hz: Vec<f64>,
    pub s11: Vec<Complex64>,
    pub power_dbm: Option<f64>,
    pub i_dc: Option<f64>,
}

impl ReflectionSpectrum {
    pub fn new(freqs_hz: Vec<f64>, s11: Vec<Complex64>) -> Result<Self> {
        let spec = Self {
            freqs_hz,
            s11,
            power_dbm: None,
            i_dc: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Model spectrum on a frequency grid.
    pub fn synthesize(freqs_hz: Vec<f64>, f0_hz: f64, q_i: f64, q_c: f64) -> Result<Self> {
        let s11 = freqs_hz
            .iter()
            .map(|&f| s11_model(f, f0_hz, q_i, q_c))
            .collect();
        Self::new(freqs_hz, s11)
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs_hz.len() != self.s11.len() {
            return Err(Error::InvalidInput(
                "frequency and S11 columns differ in length".into(),
            ));
        }
        if self.freqs_hz.is_empty() {
            return Err(Error::InvalidInput("empty spectrum".into()));
        }
        if self.freqs_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "frequencies must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Linear grid of `n` points over `[start, stop]`.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
        .collect()
}

/// `spec / baseline` point by point.
pub fn subtract_baseline(
    spec: &ReflectionSpectrum,
    baseline: &ReflectionSpectrum,
) -> Result<ReflectionSpectrum> {
    if spec.freqs_hz.len() != baseline.freqs_hz.len()
        || spec
            .freqs_hz
            .iter()
            .zip(&baseline.freqs_hz)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs())
    {
        return Err(Error::GridMismatch(format!(
            "spectrum has {} points on [{:e}, {:e}] Hz, baseline {} points on [{:e}, {:e}] Hz",
            spec.freqs_hz.len(),
            spec.freqs_hz[0],
            spec.freqs_hz[spec.freqs_hz.len() - 1],
            baseline.freqs_hz.len(),
            baseline.freqs_hz[0],
            baseline.freqs_hz[baseline.freqs_hz.len() - 1]
        )));
    }
    if let Some(k) = baseline.s11.iter().position(|b| b.norm() == 0.0) {
        return Err(Error::InvalidInput(format!(
            "baseline is zero at {:e} Hz",
            baseline.freqs_hz[k]
        )));
    }
    Ok(ReflectionSpectrum {
        freqs_hz: spec.freqs_hz.clone(),
        s11: spec
            .s11
            .iter()
            .zip(&baseline.s11)
            .map(|(s, b)| s / b)
            .collect(),
        power_dbm: spec.power_dbm,
        i_dc: spec.i_dc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S11Guess {
    pub f0_hz: f64,
    pub q_i: f64,
    pub q_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S11Fit {
    pub f0_hz: f64,
    pub q_i: f64,
    pub q_c: f64,
    /// Sum of squared complex residuals.
    pub residual: f64,
}

/// Starting point from the deepest absorption and the half-depth width of `1 − |S11|²`.
pub fn initial_guess(spec: &ReflectionSpectrum) -> Result<S11Guess> {
    let absorbed: Vec<f64> = spec.s11.iter().map(|s| 1.0 - s.norm_sqr()).collect();
    let (k0, &peak) = absorbed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidInput("empty spectrum".into()))?;
    let n = absorbed.len();
    if k0 == 0 || k0 == n - 1 || !(peak > 0.0) {
        return Err(Error::ResonanceOutsideSpan(format!(
            "deepest point is at the edge ({:e} Hz)",
            spec.freqs_hz[k0]
        )));
    }
    let half = 0.5 * peak;
    let lo = (0..k0).rev().find(|&k| absorbed[k] < half);
    let hi = (k0 + 1..n).find(|&k| absorbed[k] < half);
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(Error::ResonanceOutsideSpan(
            "half-depth points not both inside the span".into(),
        ));
    };
    let f0 = spec.freqs_hz[k0];
    let fwhm = spec.freqs_hz[hi] - spec.freqs_hz[lo];
    let span = spec.freqs_hz[n - 1] - spec.freqs_hz[0];
    if span < 3.0 * fwhm {
        return Err(Error::InvalidInput(format!(
            "span {span:e} Hz is under 3 linewidths ({fwhm:e} Hz)"
        )));
    }
    let q_l = f0 / fwhm;
    // peak = 4r/(1+r)² with r = Q_i/Q_c; the sign of S11(ω0) picks the root
    let a = peak.min(1.0);
    let disc = ((4.0 - 2.0 * a).powi(2) - 4.0 * a * a).max(0.0).sqrt();
    let r_small = (4.0 - 2.0 * a - disc) / (2.0 * a);
    let under = spec.s11[k0].re < 0.0;
    let r = if under { r_small } else { 1.0 / r_small };
    let q_c = q_l * (1.0 + 1.0 / r);
    Ok(S11Guess {
        f0_hz: f0,
        q_i: r * q_c,
        q_c,
    })
}

/// Nonlinear least squares on the complex residuals, parameters `(f0, ln Q_i, ln Q_c)`.
pub fn fit_s11(spec: &ReflectionSpectrum, guess: Option<S11Guess>) -> Result<S11Fit> {
    spec.validate()?;
    if spec.freqs_hz.len() < 8 {
        return Err(Error::InvalidInput("need at least 8 points to fit".into()));
    }
    let g = match guess {
        Some(g) => g,
        None => initial_guess(spec)?,
    };
    let width = g.f0_hz * (1.0 / g.q_i + 1.0 / g.q_c);
    let omegas: Vec<f64> = spec.freqs_hz.iter().map(|&f| hz_to_angular(f)).collect();
    let residuals = |p: &[f64]| -> Vec<f64> {
        let w0 = hz_to_angular(g.f0_hz + p[0] * width);
        let (qi, qc) = (p[1].exp(), p[2].exp());
        let mut r = Vec::with_capacity(2 * omegas.len());
        for (w, s) in omegas.iter().zip(&spec.s11) {
            let d = s11_model(*w, w0, qi, qc) - s;
            r.push(d.re);
            r.push(d.im);
        }
        r
    };
    let fit = least_squares(residuals, &[0.0, g.q_i.ln(), g.q_c.ln()])?;
    let f0 = g.f0_hz + fit.params[0] * width;
    if f0 < spec.freqs_hz[0] || f0 > spec.freqs_hz[spec.freqs_hz.len() - 1] {
        return Err(Error::ResonanceOutsideSpan(format!(
            "fitted f0 = {f0:e} Hz"
        )));
    }
    Ok(S11Fit {
        f0_hz: f0,
        q_i: fit.params[1].exp(),
        q_c: fit.params[2].exp(),
        residual: fit.ssr,
    })
}

/// CSV with header `freq_hz,re_s11,im_s11`.
pub fn read_spectrum_csv<R: Read>(input: R) -> Result<ReflectionSpectrum> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["freq_hz", "re_s11", "im_s11"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header freq_hz,re_s11,im_s11, got {:?}", header),
        });
    }
    let (mut freqs, mut s11) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!(
                        "column {} is not a number: {:?}",
                        k + 1,
                        rec.get(k).unwrap_or("")
                    ),
                })
        };
        freqs.push(num(0)?);
        s11.push(Complex64::new(num(1)?, num(2)?));
    }
    ReflectionSpectrum::new(freqs, s11)
}

pub fn write_spectrum_csv<W: Write>(spec: &ReflectionSpectrum, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["freq_hz", "re_s11", "im_s11"])
        .map_err(csv_err)?;
    for (f, s) in spec.freqs_hz.iter().zip(&spec.s11) {
        w.write_record([f.to_string(), s.re.to_string(), s.im.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
