//! Pulse sequences, Monte-Carlo shots and click classification.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::dynamics::{
    integrate_observed, vacuum_state, DriveSegment, Envelope, Flow, IntegratorConfig, PumpState,
    QuadratureTrajectory, Resolver, Schedule, SimState,
};
use crate::error::{Error, Result};
use crate::units::photon_flux;

/// Spin-echo wavepacket arriving at each refocus time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoModel {
    /// Peak input amplitude, √(photons/s).
    pub peak_amplitude: f64,
    pub duration_s: f64,
    pub phase: f64,
    pub envelope: Envelope,
    /// Amplitude multiplier per refocusing pulse.
    pub per_refocus_decay: f64,
}

impl EchoModel {
    pub fn new(peak_amplitude: f64) -> Self {
        Self {
            peak_amplitude,
            duration_s: 10e-6,
            phase: 0.0,
            envelope: Envelope::Gaussian { sigma_s: 2.5e-6 },
            per_refocus_decay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Sequence(format!(
                "echo duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.per_refocus_decay > 0.0 && self.per_refocus_decay <= 1.0) {
            return Err(Error::Sequence(format!(
                "per_refocus_decay must be in (0, 1], got {}",
                self.per_refocus_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Dead,
    Pump(PumpState),
    Stimulus(DriveSegment),
    Echo {
        repetition: usize,
        drive: DriveSegment,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: SegmentKind,
}

/// Ordered segments: dead and pump segments tile the pump channel, drives overlay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    pub total_duration: f64,
    #[serde(skip)]
    pumps: Vec<(f64, f64, PumpState)>,
    #[serde(skip)]
    drives: Vec<DriveSegment>,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>, total_duration: f64) -> Result<Self> {
        let mut seq = Self {
            segments,
            total_duration,
            pumps: Vec::new(),
            drives: Vec::new(),
        };
        seq.validate()?;
        seq.index();
        Ok(seq)
    }

    fn index(&mut self) {
        self.pumps = self
            .segments
            .iter()
            .filter_map(|s| match s.kind {
                SegmentKind::Pump(p) => Some((s.t_start, s.t_end, p)),
                _ => None,
            })
            .collect();
        self.drives = self
            .segments
            .iter()
            .filter_map(|s| match s.kind {
                SegmentKind::Stimulus(d) | SegmentKind::Echo { drive: d, .. } => Some(d),
                _ => None,
            })
            .collect();
    }

    fn validate(&self) -> Result<()> {
        if !(self.total_duration > 0.0) {
            return Err(Error::Sequence("total duration must be positive".into()));
        }
        let mut cursor = 0.0;
        for s in self
            .segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Dead | SegmentKind::Pump(_)))
        {
            if s.t_start != cursor || !(s.t_end > s.t_start) {
                return Err(Error::Sequence(format!(
                    "pump channel not tiled at t = {:e} s",
                    cursor
                )));
            }
            cursor = s.t_end;
        }
        if cursor != self.total_duration {
            return Err(Error::Sequence(format!(
                "pump channel ends at {cursor:e} s, sequence at {:e} s",
                self.total_duration
            )));
        }
        for s in &self.segments {
            if let SegmentKind::Stimulus(d) | SegmentKind::Echo { drive: d, .. } = s.kind {
                d.validate()?;
                if d.t_start < 0.0 || d.t_end > self.total_duration {
                    return Err(Error::Sequence("drive segment outside the sequence".into()));
                }
            }
        }
        Ok(())
    }

    /// Pump-on intervals `[start, end)`.
    pub fn pump_windows(&self) -> Vec<(f64, f64)> {
        self.pumps.iter().map(|&(a, b, _)| (a, b)).collect()
    }

    pub fn drives(&self) -> &[DriveSegment] {
        &self.drives
    }

    /// Same sequence with every pump segment at phase `phi`.
    pub fn with_pump_phase(&self, phi: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.segments {
            if let SegmentKind::Pump(p) = &mut s.kind {
                p.phi_pump = phi;
            }
        }
        out.index();
        out
    }
}

impl Schedule for PulseSequence {
    fn duration(&self) -> f64 {
        self.total_duration
    }
    fn pump_at(&self, t: f64) -> Option<(usize, PumpState)> {
        self.pumps
            .iter()
            .position(|&(a, b, _)| t >= a && t < b)
            .map(|k| (k, self.pumps[k].2))
    }
    fn drive_at(&self, t: f64) -> Complex64 {
        self.drives.iter().map(|d| d.value_at(t)).sum()
    }
    fn frame_pump_phase(&self) -> f64 {
        self.pumps.first().map_or(PI, |p| p.2.phi_pump)
    }
    fn pump_settings(&self) -> Vec<PumpState> {
        self.pumps.iter().map(|p| p.2).collect()
    }
}

/// Timing and power of the single-stimulus efficiency sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusPlan {
    pub tau0_s: f64,
    pub tau1_s: f64,
    pub tau2_s: f64,
    /// Stimulus power at the device input (W).
    pub p0_w: f64,
    /// Stimulus carrier, set on resonance (rad/s).
    pub omega0: f64,
    pub p_pump: f64,
    pub phi_pump: f64,
    pub stimulus_phase: f64,
}

/// Pump on for `τ0 + τ1 + τ2`, stimulus during `[τ0, τ0 + τ1)`. The control keeps the layout with zero amplitude.
pub fn build_stimulus_sequence(plan: &StimulusPlan, with_stimulus: bool) -> Result<PulseSequence> {
    let durations = [plan.tau0_s, plan.tau1_s, plan.tau2_s];
    if durations.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Sequence(format!(
            "stimulus timings must be positive, got {durations:?}"
        )));
    }
    let total = plan.tau0_s + plan.tau1_s + plan.tau2_s;
    let amplitude = if with_stimulus {
        photon_flux(plan.p0_w, plan.omega0).sqrt()
    } else {
        0.0
    };
    let drive = DriveSegment {
        t_start: plan.tau0_s,
        t_end: plan.tau0_s + plan.tau1_s,
        amplitude,
        phase: plan.stimulus_phase,
        envelope: Envelope::Rectangular,
    };
    let pump = PumpState {
        p_pump: plan.p_pump,
        phi_pump: plan.phi_pump,
    };
    PulseSequence::new(
        vec![
            Segment {
                t_start: 0.0,
                t_end: total,
                kind: SegmentKind::Pump(pump),
            },
            Segment {
                t_start: drive.t_start,
                t_end: drive.t_end,
                kind: SegmentKind::Stimulus(drive),
            },
        ],
        total,
    )
}

/// Timing of a CPMG-N readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpmgPlan {
    pub n_refocus: usize,
    /// π/2 pulse length.
    pub tau0_s: f64,
    /// Delay from the end of the π/2 pulse to the first π pulse.
    pub tau1_s: f64,
    /// π pulse length.
    pub tau2_s: f64,
    pub echo: EchoModel,
    pub pad_lead_s: f64,
    pub pad_trail_s: f64,
    pub p_pump: f64,
    pub phi_pump: f64,
    /// `false` builds the control with no echoes.
    pub with_echo: bool,
}

impl CpmgPlan {
    /// π-pulse spacing `2τ1 + 4τ0/π`.
    pub fn tau3(&self) -> f64 {
        2.0 * self.tau1_s + 4.0 * self.tau0_s / PI
    }

    /// Start of the k-th π pulse (k from 1).
    pub fn pi_start(&self, k: usize) -> f64 {
        self.tau0_s + self.tau1_s + (k - 1) as f64 * self.tau3()
    }

    /// Centre of the k-th echo, half a spacing after the k-th π pulse centre.
    pub fn echo_centre(&self, k: usize) -> f64 {
        self.pi_start(k) + 0.5 * self.tau2_s + 0.5 * self.tau3()
    }
}

/// One pump window per refocusing pulse, padded away from the π pulses either side, with an echo inside each.
pub fn build_cpmg_sequence(plan: &CpmgPlan) -> Result<PulseSequence> {
    if plan.n_refocus == 0 {
        return Err(Error::Sequence("n_refocus must be at least 1".into()));
    }
    if [plan.tau0_s, plan.tau1_s, plan.tau2_s]
        .iter()
        .any(|d| !(*d > 0.0))
        || plan.pad_lead_s < 0.0
        || plan.pad_trail_s < 0.0
    {
        return Err(Error::Sequence(
            "CPMG timings must be positive and pads non-negative".into(),
        ));
    }
    plan.echo.validate()?;
    let tau3 = plan.tau3();
    let pump = PumpState {
        p_pump: plan.p_pump,
        phi_pump: plan.phi_pump,
    };
    let mut segments = Vec::new();
    let mut cursor = 0.0;
    for k in 1..=plan.n_refocus {
        let open = plan.pi_start(k) + plan.tau2_s + plan.pad_lead_s;
        let close = plan.pi_start(k) + tau3 - plan.pad_trail_s;
        if !(close > open) {
            return Err(Error::Sequence(format!(
                "pump pads ({:e} s, {:e} s) overlap the π pulses at spacing {tau3:e} s",
                plan.pad_lead_s, plan.pad_trail_s
            )));
        }
        let centre = plan.echo_centre(k);
        let half = 0.5 * plan.echo.duration_s;
        if centre - half < open || centre + half > close {
            return Err(Error::Sequence(format!(
                "echo {k} falls outside its pump window"
            )));
        }
        segments.push(Segment {
            t_start: cursor,
            t_end: open,
            kind: SegmentKind::Dead,
        });
        segments.push(Segment {
            t_start: open,
            t_end: close,
            kind: SegmentKind::Pump(pump),
        });
        let amplitude = if plan.with_echo {
            plan.echo.peak_amplitude * plan.echo.per_refocus_decay.powi(k as i32 - 1)
        } else {
            0.0
        };
        let drive = DriveSegment {
            t_start: centre - half,
            t_end: centre + half,
            amplitude,
            phase: plan.echo.phase,
            envelope: plan.echo.envelope,
        };
        segments.push(Segment {
            t_start: drive.t_start,
            t_end: drive.t_end,
            kind: SegmentKind::Echo {
                repetition: k,
                drive,
            },
        });
        cursor = close;
    }
    PulseSequence::new(segments, cursor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Threshold on `√(X² + Y²)`.
    pub amp_threshold: f64,
    /// Standard deviation of white noise added to each recorded quadrature.
    pub record_noise_sd: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            amp_threshold: 1e3f64.sqrt(),
            record_noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_idx: usize,
    pub clicked: bool,
    pub t_click: Option<f64>,
    /// Largest pump-on amplitude seen before the record stopped.
    pub max_amplitude: f64,
    pub seed: u64,
    /// Pump window (0-based) the click fell in.
    pub window: Option<usize>,
    pub phi_pump: f64,
    pub error: Option<String>,
}

/// Latched first-crossing detector.
struct Latch {
    threshold: f64,
    click: Option<(f64, usize)>,
    max_amplitude: f64,
}

impl Latch {
    fn new(threshold: f64) -> Self {
        Self {
            threshold,
            click: None,
            max_amplitude: 0.0,
        }
    }

    /// Returns `true` once latched.
    fn feed(&mut self, t: f64, amplitude: f64, window: Option<usize>) -> bool {
        if let Some(w) = window {
            self.max_amplitude = self.max_amplitude.max(amplitude);
            if self.click.is_none() && amplitude > self.threshold {
                self.click = Some((t, w));
            }
        }
        self.click.is_some()
    }
}

/// Classifies a recorded trajectory. Samples count only inside the half-open `pump_windows`.
pub fn classify(
    traj: &QuadratureTrajectory,
    amp_threshold: f64,
    pump_windows: &[(f64, f64)],
) -> Result<ShotRecord> {
    if !(amp_threshold > 0.0) {
        return Err(Error::InvalidInput(format!(
            "amp_threshold must be positive, got {amp_threshold}"
        )));
    }
    let mut latch = Latch::new(amp_threshold);
    for (k, s) in traj.samples.iter().enumerate() {
        let t = k as f64 * traj.dt;
        let window = pump_windows.iter().position(|&(a, b)| t >= a && t < b);
        if latch.feed(t, s.amplitude(), window) {
            break;
        }
    }
    Ok(ShotRecord {
        shot_idx: 0,
        clicked: latch.click.is_some(),
        t_click: latch.click.map(|c| c.0),
        max_amplitude: latch.max_amplitude,
        seed: traj.rng_seed,
        window: latch.click.map(|c| c.1),
        phi_pump: f64::NAN,
        error: None,
    })
}

/// Position `index` of the splitmix64 stream started at `base`.
pub fn shot_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct ShotConfig<R> {
    pub resolver: R,
    pub integrator: IntegratorConfig,
    pub detector: DetectorConfig,
}

/// Runs one shot from a fresh vacuum state; the record stops at the first click.
pub fn run_shot<R: Resolver>(
    seq: &PulseSequence,
    cfg: &ShotConfig<R>,
    shot_idx: usize,
    seed: u64,
    phase_mod: bool,
) -> ShotRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = if phase_mod {
        rng.random::<f64>() * 2.0 * PI
    } else {
        seq.frame_pump_phase()
    };
    let modulated;
    let seq = if phase_mod {
        modulated = seq.with_pump_phase(phi);
        &modulated
    } else {
        seq
    };
    let mut record_rng = ChaCha8Rng::seed_from_u64(seed);
    record_rng.set_stream(1);
    let sd = cfg.detector.record_noise_sd;
    let init = SimState {
        quad: vacuum_state(&cfg.integrator.noise, &mut rng),
        n_filtered: 0.0,
    };
    let mut latch = Latch::new(cfg.detector.amp_threshold);
    let outcome = integrate_observed(seq, &cfg.resolver, &cfg.integrator, &mut rng, init, |v| {
        let (mut x, mut y) = (v.state.x, v.state.y);
        if sd > 0.0 {
            let nx: f64 = StandardNormal.sample(&mut record_rng);
            let ny: f64 = StandardNormal.sample(&mut record_rng);
            x += sd * nx;
            y += sd * ny;
        }
        if latch.feed(v.t, x.hypot(y), v.pump_window) {
            Flow::Stop
        } else {
            Flow::Continue
        }
    });
    ShotRecord {
        shot_idx,
        clicked: latch.click.is_some(),
        t_click: latch.click.map(|c| c.0),
        max_amplitude: latch.max_amplitude,
        seed,
        window: latch.click.map(|c| c.1),
        phi_pump: phi,
        error: outcome.err().map(|e| e.to_string()),
    }
}

/// Independent seeded shots in parallel, returned in shot order. Per-shot failures are recorded, not raised.
pub fn run_shots<R: Resolver + Sync>(
    seq: &PulseSequence,
    cfg: &ShotConfig<R>,
    n_shots: usize,
    base_seed: u64,
    phase_mod: bool,
) -> Result<Vec<ShotRecord>> {
    if n_shots == 0 {
        return Err(Error::InvalidInput("n_shots must be at least 1".into()));
    }
    if !(cfg.detector.amp_threshold > 0.0) {
        return Err(Error::InvalidInput("amp_threshold must be positive".into()));
    }
    Ok((0..n_shots)
        .into_par_iter()
        .map(|k| run_shot(seq, cfg, k, shot_seed(base_seed, k as u64), phase_mod))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSummary {
    pub n_shots: usize,
    pub n_clicks: usize,
    pub n_errors: usize,
    pub click_probability: f64,
    /// First few per-shot errors as `(shot_idx, message)`.
    pub errors: Vec<(usize, String)>,
}

const SUMMARY_ERRORS: usize = 10;

pub fn summarize(records: &[ShotRecord]) -> ShotSummary {
    let ok: Vec<&ShotRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let n_clicks = ok.iter().filter(|r| r.clicked).count();
    ShotSummary {
        n_shots: ok.len(),
        n_clicks,
        n_errors: records.len() - ok.len(),
        click_probability: if ok.is_empty() {
            f64::NAN
        } else {
            n_clicks as f64 / ok.len() as f64
        },
        errors: records
            .iter()
            .filter_map(|r| r.error.clone().map(|e| (r.shot_idx, e)))
            .take(SUMMARY_ERRORS)
            .collect(),
    }
}

/// Shots (without errors) that clicked in one of the first `n_windows` pump windows.
pub fn clicks_within(records: &[ShotRecord], n_windows: usize) -> (usize, usize) {
    let ok = records.iter().filter(|r| r.error.is_none());
    let n = ok.clone().count();
    (
        ok.filter(|r| r.window.is_some_and(|w| w < n_windows))
            .count(),
        n,
    )
}

/// Counts of first clicks per time bin over `[0, t_max)`.
pub fn click_time_histogram(
    records: &[ShotRecord],
    t_max: f64,
    n_bins: usize,
) -> Vec<(f64, usize)> {
    let width = t_max / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for t in records.iter().filter_map(|r| r.t_click) {
        let k = ((t / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * width, c))
        .collect()
}

/// Counts of first clicks per pump window.
pub fn window_histogram(records: &[ShotRecord], n_windows: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_windows];
    for w in records.iter().filter_map(|r| r.window) {
        if w < n_windows {
            counts[w] += 1;
        }
    }
    counts
}

/// CSV with columns `shot_idx,clicked,t_click_s,seed`.
pub fn write_shots_csv<W: Write>(records: &[ShotRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["shot_idx", "clicked", "t_click_s", "seed"])
        .map_err(csv_err)?;
    for r in records {
        let t = r.t_click.map(|t| format!("{t:e}")).unwrap_or_default();
        w.write_record([
            r.shot_idx.to_string(),
            u8::from(r.clicked).to_string(),
            t,
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}
