//! Experiment configuration file (TOML). Every dimensional key carries its unit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, CliError, CliResult};
use crate::device::{omega0_of_idc, DeviceParams, TlsModel};
use crate::dynamics::{DeviceResolver, Envelope, IntegratorConfig, NoiseConfig, TlsFeedback};
use crate::protocol::{DetectorConfig, EchoModel};
use crate::units::{dbm_to_watts, hz_to_angular, photon_flux};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub device: DeviceSection,
    pub operating: OperatingSection,
    #[serde(default)]
    pub integration: IntegrationSection,
    #[serde(default)]
    pub detector: DetectorSection,
    pub threshold_map: Option<ThresholdMapSection>,
    pub shots: Option<ShotsSection>,
    pub cpmg: Option<CpmgSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// Resonance at zero DC bias.
    pub f0_zero_ghz: f64,
    pub i_star_ma: f64,
    pub q_c: f64,
    pub z_p_ohm: f64,
    pub alpha_p: f64,
    pub l_total_nh: f64,
    #[serde(default)]
    pub tls: TlsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TlsSection {
    pub q_i_floor: f64,
    pub q_i_ceiling: f64,
    pub n_critical_photons: f64,
    pub exponent: f64,
}

impl Default for TlsSection {
    fn default() -> Self {
        let m = TlsModel::default();
        Self {
            q_i_floor: m.q_i_floor,
            q_i_ceiling: m.q_i_ceiling,
            n_critical_photons: m.n_critical,
            exponent: m.exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingSection {
    pub i_dc_ma: f64,
    /// Pump power at the chip input, before the ripple factor.
    pub pump_dbm: f64,
    /// `Δ_p = ω_p − 2ω0(I_DC)` over 2π.
    #[serde(default)]
    pub pump_detuning_mhz: f64,
    #[serde(default)]
    pub phi_pump_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationSection {
    pub dt_ns: f64,
    /// Per-quadrature noise in units of the loss rate; 0.5 is vacuum.
    pub noise_rate: f64,
    pub eta: f64,
    /// `Q_i` follows the filtered photon number through the TLS law.
    pub tls_feedback: bool,
    pub tls_tau_us: f64,
}

impl Default for IntegrationSection {
    fn default() -> Self {
        Self {
            dt_ns: 10.0,
            noise_rate: 0.5,
            eta: 1.0,
            tls_feedback: true,
            tls_tau_us: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    /// Click when `X² + Y²` exceeds this.
    pub threshold_photons: f64,
    /// Per-quadrature white record noise, in amplitude units (√photons).
    pub record_noise_sd_amp: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            threshold_photons: 1e3,
            record_noise_sd_amp: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdModel {
    /// The closed-form expression.
    Analytic,
    /// Exact oscillation boundary of the simulated equations.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdMapSection {
    pub delta_p_min_mhz: f64,
    pub delta_p_max_mhz: f64,
    pub n_points: usize,
    pub q_i: Vec<f64>,
    #[serde(default = "analytic")]
    pub model: ThresholdModel,
    /// Shift applied to the plotted x axis only.
    #[serde(default)]
    pub delta_p_offset_mhz: f64,
}

fn analytic() -> ThresholdModel {
    ThresholdModel::Analytic
}

fn yes() -> bool {
    true
}

fn hist_bins() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotsSection {
    pub n_shots: usize,
    /// Draw the pump phase uniformly per shot.
    #[serde(default = "yes")]
    pub phase_mod: bool,
    pub tau0_us: f64,
    pub tau1_us: f64,
    pub tau2_us: f64,
    pub p0_dbm: f64,
    #[serde(default)]
    pub stimulus_phase_rad: f64,
    #[serde(default = "hist_bins")]
    pub hist_bins: usize,
    /// Stimulus-energy sweep; `τ1 = J / P0` at each point.
    pub energy_sweep: Option<EnergySweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySweep {
    pub p0_dbm: Vec<f64>,
    pub j_zj: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpmgSection {
    pub n_refocus: Vec<usize>,
    pub n_shots: usize,
    #[serde(default = "yes")]
    pub phase_mod: bool,
    pub tau0_us: f64,
    pub tau1_us: f64,
    /// π-pulse length; defaults to `tau0_us`.
    pub tau2_us: Option<f64>,
    pub pad_lead_us: f64,
    pub pad_trail_us: f64,
    /// Peak echo power at the device input.
    pub echo_peak_dbm: f64,
    #[serde(default = "echo_duration")]
    pub echo_duration_us: f64,
    #[serde(default = "echo_sigma")]
    pub echo_sigma_us: f64,
    #[serde(default)]
    pub echo_phase_rad: f64,
    #[serde(default = "unity")]
    pub echo_decay_per_refocus: f64,
}

fn echo_duration() -> f64 {
    10.0
}

fn echo_sigma() -> f64 {
    2.5
}

fn unity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepCommand {
    ThresholdMap,
    Shots,
    Cpmg,
}

/// Repeats one command with a single numeric key replaced by each value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub command: SweepCommand,
    /// Dotted key path, e.g. `operating.pump_dbm`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            svg: true,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> CliResult<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks everything that does not depend on which command runs.
    pub fn validate(&self) -> CliResult<()> {
        self.device_params()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        let op = &self.operating;
        positive("operating.i_dc_ma", op.i_dc_ma)?;
        finite("operating.pump_dbm", op.pump_dbm)?;
        finite("operating.pump_detuning_mhz", op.pump_detuning_mhz)?;
        finite("operating.phi_pump_rad", op.phi_pump_rad)?;
        let int = &self.integration;
        positive("integration.dt_ns", int.dt_ns)?;
        if !(int.noise_rate >= 0.0 && int.eta >= 0.0) {
            return Err(bad(
                "integration.noise_rate and integration.eta must be non-negative",
            ));
        }
        if int.tls_feedback {
            positive("integration.tls_tau_us", int.tls_tau_us)?;
        }
        positive(
            "detector.threshold_photons",
            self.detector.threshold_photons,
        )?;
        if !(self.detector.record_noise_sd_amp >= 0.0) {
            return Err(bad("detector.record_noise_sd_amp must be non-negative"));
        }
        if let Some(t) = &self.threshold_map {
            finite("threshold_map.delta_p_min_mhz", t.delta_p_min_mhz)?;
            finite("threshold_map.delta_p_max_mhz", t.delta_p_max_mhz)?;
            finite("threshold_map.delta_p_offset_mhz", t.delta_p_offset_mhz)?;
            if t.n_points == 0 {
                return Err(bad(
                    "threshold_map.n_points must be at least 1 (empty detuning grid)",
                ));
            }
            if t.n_points > 1 && !(t.delta_p_max_mhz > t.delta_p_min_mhz) {
                return Err(bad(
                    "threshold_map.delta_p_max_mhz must exceed delta_p_min_mhz",
                ));
            }
            if t.q_i.is_empty() {
                return Err(bad("threshold_map.q_i must list at least one value"));
            }
            for &q in &t.q_i {
                positive("threshold_map.q_i", q)?;
            }
        }
        if let Some(s) = &self.shots {
            if s.n_shots == 0 {
                return Err(bad("shots.n_shots must be at least 1"));
            }
            positive("shots.tau0_us", s.tau0_us)?;
            positive("shots.tau1_us", s.tau1_us)?;
            positive("shots.tau2_us", s.tau2_us)?;
            finite("shots.p0_dbm", s.p0_dbm)?;
            if s.hist_bins == 0 {
                return Err(bad("shots.hist_bins must be at least 1"));
            }
            if let Some(e) = &s.energy_sweep {
                if e.p0_dbm.is_empty() || e.j_zj.is_empty() {
                    return Err(bad(
                        "shots.energy_sweep needs non-empty p0_dbm and j_zj lists",
                    ));
                }
                for &p in &e.p0_dbm {
                    finite("shots.energy_sweep.p0_dbm", p)?;
                }
                for &j in &e.j_zj {
                    positive("shots.energy_sweep.j_zj", j)?;
                }
            }
        }
        if let Some(c) = &self.cpmg {
            if c.n_shots == 0 {
                return Err(bad("cpmg.n_shots must be at least 1"));
            }
            if c.n_refocus.contains(&0) {
                return Err(bad("cpmg.n_refocus entries must be at least 1"));
            }
            let mut distinct = c.n_refocus.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() < 2 {
                return Err(bad(
                    "cpmg.n_refocus needs at least two distinct values to fit E(N)",
                ));
            }
            positive("cpmg.tau0_us", c.tau0_us)?;
            positive("cpmg.tau1_us", c.tau1_us)?;
            if let Some(t) = c.tau2_us {
                positive("cpmg.tau2_us", t)?;
            }
            if !(c.pad_lead_us >= 0.0 && c.pad_trail_us >= 0.0) {
                return Err(bad("cpmg pads must be non-negative"));
            }
            finite("cpmg.echo_peak_dbm", c.echo_peak_dbm)?;
            positive("cpmg.echo_duration_us", c.echo_duration_us)?;
            positive("cpmg.echo_sigma_us", c.echo_sigma_us)?;
            positive("cpmg.echo_decay_per_refocus", c.echo_decay_per_refocus)?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(bad("sweep.values must not be empty"));
            }
            for &v in &s.values {
                finite("sweep.values", v)?;
            }
        }
        if self.output.dir.is_empty() {
            return Err(bad("output.dir must not be empty"));
        }
        Ok(())
    }

    /// Copy with the numeric key at dotted `path` set to `value`.
    pub fn with_value(&self, path: &str, value: f64) -> CliResult<Self> {
        let mut doc = toml::Value::try_from(self).map_err(|e| bad(e.to_string()))?;
        let mut node = &mut doc;
        for key in path.split('.') {
            node = node.get_mut(key).ok_or_else(|| {
                bad(format!(
                    "sweep parameter {path}: no key {key:?} in the configuration"
                ))
            })?;
        }
        *node = match node {
            toml::Value::Float(_) => toml::Value::Float(value),
            toml::Value::Integer(_) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
            _ => return Err(bad(format!("sweep parameter {path} is not a numeric key"))),
        };
        let cfg: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn device_params(&self) -> DeviceParams {
        let d = &self.device;
        DeviceParams {
            omega0_zero: hz_to_angular(d.f0_zero_ghz * 1e9),
            i_star: d.i_star_ma * 1e-3,
            q_c: d.q_c,
            tls: TlsModel {
                q_i_floor: d.tls.q_i_floor,
                q_i_ceiling: d.tls.q_i_ceiling,
                n_critical: d.tls.n_critical_photons,
                exponent: d.tls.exponent,
            },
            z_p: d.z_p_ohm,
            alpha_p: d.alpha_p,
            l_total: d.l_total_nh * 1e-9,
        }
    }

    pub fn i_dc(&self) -> f64 {
        self.operating.i_dc_ma * 1e-3
    }

    pub fn p_pump(&self) -> f64 {
        dbm_to_watts(self.operating.pump_dbm)
    }

    /// Biased resonance (rad/s).
    pub fn omega0(&self) -> f64 {
        omega0_of_idc(self.i_dc(), &self.device_params())
    }

    pub fn resolver(&self) -> DeviceResolver {
        DeviceResolver {
            device: self.device_params(),
            i_dc: self.i_dc(),
            pump_detuning: hz_to_angular(self.operating.pump_detuning_mhz * 1e6),
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let int = &self.integration;
        let noise = NoiseConfig {
            noise_rate: int.noise_rate,
            eta: int.eta,
        };
        let tls = int.tls_feedback.then(|| TlsFeedback {
            model: self.device_params().tls,
            tau_s: int.tls_tau_us * 1e-6,
        });
        IntegratorConfig::new(int.dt_ns * 1e-9, noise, tls)
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            amp_threshold: self.detector.threshold_photons.sqrt(),
            record_noise_sd: self.detector.record_noise_sd_amp,
        }
    }
}

impl CpmgSection {
    pub fn echo(&self, omega0: f64) -> EchoModel {
        EchoModel {
            peak_amplitude: photon_flux(dbm_to_watts(self.echo_peak_dbm), omega0).sqrt(),
            duration_s: self.echo_duration_us * 1e-6,
            phase: self.echo_phase_rad,
            envelope: Envelope::Gaussian {
                sigma_s: self.echo_sigma_us * 1e-6,
            },
            per_refocus_decay: self.echo_decay_per_refocus,
        }
    }
}
