//! Quadrature-space dynamics of the pumped Duffing oscillator.
//!
//! The intracavity field is written `a = X − iY` in the frame rotating at
//! `ω_p/2`, rotated further so that ζ is real and positive. In that frame
//!
//! ```text
//! dX/dt = −γ̄X + (ζ − Δ − K n) Y + √κ Re a_in + noise
//! dY/dt = −γ̄Y + (ζ + Δ + K n) X − √κ Im a_in + noise,     n = X² + Y²
//! ```
//!
//! which is the gradient flow `(1/γ̄) d/dt (X, Y) = (−X − ∂g/∂Y, −Y + ∂g/∂X)`
//! of the metapotential `g`. Amplitudes are photon-normalized, so `n` is a
//! photon number and `|a_in|²` a photon flux.
//!
//! The frame rotation is `χ = (π − φ_p)/2`; a drive with lab phase `φ` enters
//! the simulation with phase `φ − χ`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::device::{q_i_of_nbar, Bias, DeviceParams, OperatingPoint, TlsModel};
use crate::error::{Error, Result};

/// Upper bound on `rate·dt` for the fixed-step integrator.
pub const MAX_RATE_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadratureState {
    pub x: f64,
    pub y: f64,
}

impl QuadratureState {
    pub const ORIGIN: Self = Self { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(alpha: f64, theta: f64) -> Self {
        Self {
            x: alpha * theta.cos(),
            y: alpha * theta.sin(),
        }
    }

    /// Instantaneous photon number `x² + y²`.
    pub fn nbar(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn amplitude(&self) -> f64 {
        self.nbar().sqrt()
    }

    pub fn phase(&self) -> f64 {
        self.y.atan2(self.x)
    }
}

/// One self-oscillating fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatingState {
    pub alpha: f64,
    pub theta: f64,
}

impl OscillatingState {
    pub fn state(&self) -> QuadratureState {
        QuadratureState::from_polar(self.alpha, self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSet {
    pub quiet: QuadratureState,
    /// Empty below the boundary, otherwise the pair (θ, θ + π).
    pub oscillating: Vec<OscillatingState>,
}

/// Metapotential `g(X, Y)`.
pub fn metapotential(x: f64, y: f64, op: &OperatingPoint) -> f64 {
    let n = x * x + y * y;
    let gb = op.gamma_bar;
    op.delta_big / (2.0 * gb) * n
        + op.zeta_mag / (2.0 * gb) * (x * x - y * y)
        + op.kerr / (4.0 * gb) * n * n
}

/// Deterministic drift. `drive` is the frame-referred input amplitude `a_in` (√(photons/s)).
pub fn drift(state: QuadratureState, op: &OperatingPoint, drive: Option<Complex64>) -> (f64, f64) {
    let QuadratureState { x, y } = state;
    let kn = op.kerr * (x * x + y * y);
    let mut dx = -op.gamma_bar * x + (op.zeta_mag - op.delta_big - kn) * y;
    let mut dy = -op.gamma_bar * y + (op.zeta_mag + op.delta_big + kn) * x;
    if let Some(a_in) = drive {
        let s = op.kappa.sqrt();
        dx += s * a_in.re;
        dy -= s * a_in.im;
    }
    (dx, dy)
}

/// Closed-form fixed points of the undriven, noiseless dynamics.
pub fn steady_states(op: &OperatingPoint) -> Result<SteadyStateSet> {
    let quiet = QuadratureState::ORIGIN;
    if !op.above_boundary() {
        return Ok(SteadyStateSet {
            quiet,
            oscillating: Vec::new(),
        });
    }
    if op.kerr == 0.0 {
        return Err(Error::UnboundedAmplitude);
    }
    let root = (op.zeta_mag.powi(2) - op.gamma_bar.powi(2)).sqrt();
    // Kerr-shifted detuning D = Δ + Kα² must equal ±root; pick the branch with α² > 0.
    let (d_shift, alpha_sq) = [-root, root]
        .into_iter()
        .map(|d| (d, (d - op.delta_big) / op.kerr))
        .find(|&(_, a2)| a2 > 0.0)
        .ok_or(Error::UnboundedAmplitude)?;
    // Fixed point of dY/dt = 0: (ζ + D) cos θ = γ̄ sin θ.
    let theta = (op.zeta_mag + d_shift).atan2(op.gamma_bar);
    let alpha = alpha_sq.sqrt();
    Ok(SteadyStateSet {
        quiet,
        oscillating: vec![
            OscillatingState { alpha, theta },
            OscillatingState {
                alpha,
                theta: theta + PI,
            },
        ],
    })
}

/// Frame rotation that makes ζ real and positive.
pub fn frame_rotation(phi_pump: f64) -> f64 {
    0.5 * (PI - phi_pump)
}

/// Pump configuration for one pump-on window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpState {
    pub p_pump: f64,
    pub phi_pump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Rectangular,
    /// Gaussian whose peak sits at the segment centre.
    Gaussian {
        sigma_s: f64,
    },
}

/// A coherent input pulse on the port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSegment {
    pub t_start: f64,
    pub t_end: f64,
    /// Peak input amplitude, √(photons/s).
    pub amplitude: f64,
    /// Lab phase relative to the local oscillator at ω_p/2.
    pub phase: f64,
    pub envelope: Envelope,
}

impl DriveSegment {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t_start) || !(self.amplitude >= 0.0) {
            return Err(Error::Sequence(format!(
                "drive segment needs t_end > t_start and amplitude >= 0 (got [{}, {}], {})",
                self.t_start, self.t_end, self.amplitude
            )));
        }
        if let Envelope::Gaussian { sigma_s } = self.envelope {
            if !(sigma_s > 0.0) {
                return Err(Error::Sequence("gaussian envelope needs sigma > 0".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }

    /// Lab-frame complex amplitude at `t` (zero outside the segment).
    pub fn value_at(&self, t: f64) -> Complex64 {
        if !self.contains(t) {
            return Complex64::new(0.0, 0.0);
        }
        let scale = match self.envelope {
            Envelope::Rectangular => 1.0,
            Envelope::Gaussian { sigma_s } => {
                let mid = 0.5 * (self.t_start + self.t_end);
                (-0.5 * ((t - mid) / sigma_s).powi(2)).exp()
            }
        };
        Complex64::from_polar(self.amplitude * scale, self.phase)
    }
}

/// Time-dependent pump and drive program the integrator follows.
pub trait Schedule {
    fn duration(&self) -> f64;
    /// Pump window index and setting at `t`, or `None` while the pump is off.
    fn pump_at(&self, t: f64) -> Option<(usize, PumpState)>;
    /// Sum of all lab-frame drives at `t`.
    fn drive_at(&self, t: f64) -> Complex64;
    /// Pump phase that fixes the simulation frame for the whole run.
    fn frame_pump_phase(&self) -> f64;
    /// Every distinct pump setting the schedule uses.
    fn pump_settings(&self) -> Vec<PumpState>;
}

/// Pump held at one setting (or off) for a fixed duration, with optional drives.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSchedule {
    pub duration: f64,
    pub pump: Option<PumpState>,
    pub drives: Vec<DriveSegment>,
}

impl ConstantSchedule {
    pub fn new(duration: f64, pump: Option<PumpState>) -> Self {
        Self {
            duration,
            pump,
            drives: Vec::new(),
        }
    }

    pub fn with_drive(mut self, drive: DriveSegment) -> Self {
        self.drives.push(drive);
        self
    }
}

impl Schedule for ConstantSchedule {
    fn duration(&self) -> f64 {
        self.duration
    }
    fn pump_at(&self, _t: f64) -> Option<(usize, PumpState)> {
        self.pump.map(|p| (0, p))
    }
    fn drive_at(&self, t: f64) -> Complex64 {
        self.drives.iter().map(|d| d.value_at(t)).sum()
    }
    fn frame_pump_phase(&self) -> f64 {
        self.pump.map_or(PI, |p| p.phi_pump)
    }
    fn pump_settings(&self) -> Vec<PumpState> {
        self.pump.into_iter().collect()
    }
}

/// Maps pump settings onto operating points with `q_i` at its low-power value.
pub trait Resolver {
    fn resolve(&self, pump: Option<PumpState>) -> Result<OperatingPoint>;
}

/// Resolves pump settings through the device model at fixed bias and pump detuning.
#[derive(Debug, Clone, Copy)]
pub struct DeviceResolver {
    pub device: DeviceParams,
    pub i_dc: f64,
    /// `Δ_p = ω_p − 2ω0(I_DC)` (rad/s).
    pub pump_detuning: f64,
}

impl Resolver for DeviceResolver {
    fn resolve(&self, pump: Option<PumpState>) -> Result<OperatingPoint> {
        let (p, phi) = pump.map_or((0.0, 0.0), |s| (s.p_pump, s.phi_pump));
        let bias = Bias::with_pump_detuning(&self.device, self.i_dc, p, self.pump_detuning, phi);
        OperatingPoint::derive(&self.device, bias, self.device.tls.q_i_floor)
    }
}

/// A fixed operating point; pump-off means ζ = 0 and the pump shift removed.
#[derive(Debug, Clone, Copy)]
pub struct FixedResolver(pub OperatingPoint);

impl Resolver for FixedResolver {
    fn resolve(&self, pump: Option<PumpState>) -> Result<OperatingPoint> {
        Ok(match pump {
            Some(_) => self.0,
            None => self.0.pump_off(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Per-quadrature noise rate in units of (κ+γ)/2; 0.5 is half-photon vacuum.
    pub noise_rate: f64,
    /// Overall scale on the noise variance.
    pub eta: f64,
}

impl NoiseConfig {
    pub const OFF: Self = Self {
        noise_rate: 0.0,
        eta: 0.0,
    };

    /// Stationary `⟨x² + y²⟩` of the undriven, unpumped cavity.
    pub fn vacuum_nbar(&self) -> f64 {
        self.noise_rate * self.eta
    }

    /// Per-quadrature diffusion `σ²` (1/s) at loss rates κ, γ.
    pub fn sigma_sq(&self, kappa: f64, gamma: f64) -> f64 {
        self.noise_rate * 0.5 * (kappa + gamma) * self.eta
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            noise_rate: 0.5,
            eta: 1.0,
        }
    }
}

/// `Q_i` follows a low-pass filtered photon number (above vacuum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsFeedback {
    pub model: TlsModel,
    pub tau_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub noise: NoiseConfig,
    /// `None` keeps each operating point's `q_i` fixed.
    pub tls: Option<TlsFeedback>,
    /// Keep every `record_stride`-th sample in recorded trajectories.
    pub record_stride: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, noise: NoiseConfig, tls: Option<TlsFeedback>) -> Self {
        Self {
            dt,
            noise,
            tls,
            record_stride: 1,
        }
    }
}

/// Integrator state carried between runs (for quasi-static sweeps).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimState {
    pub quad: QuadratureState,
    /// Low-pass filtered excess photon number seen by the TLS bath.
    pub n_filtered: f64,
}

/// What the observer sees after each step.
#[derive(Debug, Clone, Copy)]
pub struct StepView {
    pub step: usize,
    pub t: f64,
    pub state: QuadratureState,
    pub q_i: f64,
    pub pump_window: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Draws a state from the unpumped vacuum distribution.
pub fn vacuum_state(noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> QuadratureState {
    let sd = (0.5 * noise.vacuum_nbar()).sqrt();
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    QuadratureState::new(sd * x, sd * y)
}

struct Segment {
    window: Option<usize>,
    pump: Option<PumpState>,
    base: OperatingPoint,
}

/// Core Euler–Maruyama loop. Calls `observe` with the initial sample and after every step.
///
/// Samples are at `t = k·dt`, `k = 0..=steps` with `steps = round(duration/dt)`.
pub fn integrate_observed<S, R, F>(
    schedule: &S,
    resolver: &R,
    cfg: &IntegratorConfig,
    rng: &mut ChaCha8Rng,
    init: SimState,
    mut observe: F,
) -> Result<SimState>
where
    S: Schedule + ?Sized,
    R: Resolver + ?Sized,
    F: FnMut(&StepView) -> Flow,
{
    let dt = cfg.dt;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    check_step(schedule, resolver, cfg)?;

    let steps = (schedule.duration() / dt).round() as usize;
    let n_vac = cfg.noise.vacuum_nbar();
    let filter_gain = cfg.tls.map_or(0.0, |tls| -(-dt / tls.tau_s).exp_m1());
    let frame = Complex64::from_polar(1.0, -frame_rotation(schedule.frame_pump_phase()));
    let sqrt_dt = dt.sqrt();

    let mut state = init;
    let mut seg = resolve_segment(schedule, resolver, 0.0)?;
    let q_i_now = |seg: &Segment, n_f: f64| match cfg.tls {
        Some(tls) if !tls.model.is_fixed() => q_i_of_nbar(n_f, &tls.model),
        Some(tls) => tls.model.q_i_floor,
        None => seg.base.q_i,
    };

    let view = StepView {
        step: 0,
        t: 0.0,
        state: state.quad,
        q_i: q_i_now(&seg, state.n_filtered),
        pump_window: seg.window,
    };
    if observe(&view) == Flow::Stop {
        return Ok(state);
    }

    for k in 0..steps {
        let t = k as f64 * dt;
        let pump_now = schedule.pump_at(t);
        if pump_now.map(|p| p.1) != seg.pump || pump_now.map(|p| p.0) != seg.window {
            seg = resolve_segment(schedule, resolver, t)?;
        }
        let q_i = q_i_now(&seg, state.n_filtered);
        let op = if cfg.tls.is_some() {
            seg.base.with_q_i(q_i)
        } else {
            seg.base
        };

        let drive_lab = schedule.drive_at(t);
        let drive = if drive_lab.re != 0.0 || drive_lab.im != 0.0 {
            Some(drive_lab * frame)
        } else {
            None
        };
        let (fx, fy) = drift(state.quad, &op, drive);
        let mut x = state.quad.x + fx * dt;
        let mut y = state.quad.y + fy * dt;
        let sigma_sq = cfg.noise.sigma_sq(op.kappa, op.gamma);
        if sigma_sq > 0.0 {
            let s = sigma_sq.sqrt() * sqrt_dt;
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            x += s * nx;
            y += s * ny;
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite { t_s: t + dt, x, y });
        }
        let excess = (state.quad.nbar() - n_vac).max(0.0);
        state.n_filtered += filter_gain * (excess - state.n_filtered);
        state.quad = QuadratureState::new(x, y);

        let t_next = (k + 1) as f64 * dt;
        let view = StepView {
            step: k + 1,
            t: t_next,
            state: state.quad,
            q_i: q_i_now(&seg, state.n_filtered),
            pump_window: schedule.pump_at(t_next).map(|p| p.0),
        };
        if observe(&view) == Flow::Stop {
            break;
        }
    }
    Ok(state)
}

fn resolve_segment<S, R>(schedule: &S, resolver: &R, t: f64) -> Result<Segment>
where
    S: Schedule + ?Sized,
    R: Resolver + ?Sized,
{
    let p = schedule.pump_at(t);
    Ok(Segment {
        window: p.map(|v| v.0),
        pump: p.map(|v| v.1),
        base: resolver.resolve(p.map(|v| v.1))?,
    })
}

/// Fastest rate any pump setting produces, with `q_i` at its lowest.
fn check_step<S, R>(schedule: &S, resolver: &R, cfg: &IntegratorConfig) -> Result<()>
where
    S: Schedule + ?Sized,
    R: Resolver + ?Sized,
{
    let mut settings: Vec<Option<PumpState>> =
        schedule.pump_settings().into_iter().map(Some).collect();
    settings.push(None);
    let mut rate: f64 = 0.0;
    for s in settings {
        let mut op = resolver.resolve(s)?;
        if let Some(tls) = cfg.tls {
            op = op.with_q_i(tls.model.q_i_floor);
        }
        rate = rate
            .max(op.gamma_bar)
            .max(op.delta_big.abs())
            .max(op.zeta_mag);
    }
    let rate_dt = rate * cfg.dt;
    if rate_dt >= MAX_RATE_DT {
        return Err(Error::StepTooLarge {
            rate_dt,
            limit: MAX_RATE_DT,
        });
    }
    Ok(())
}

/// Sampled trajectory of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTrajectory {
    /// Spacing between stored samples.
    pub dt: f64,
    pub samples: Vec<QuadratureState>,
    pub rng_seed: u64,
    pub q_i_track: Vec<f64>,
    pub pump_window: Vec<Option<usize>>,
}

impl QuadratureTrajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }

    pub fn last(&self) -> QuadratureState {
        *self
            .samples
            .last()
            .expect("trajectory has at least one sample")
    }

    /// CSV with columns `t_s,x,y,nbar,q_i_eff`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_s,x,y,nbar,q_i_eff")?;
        for ((t, s), q) in self.times().zip(&self.samples).zip(&self.q_i_track) {
            writeln!(
                out,
                "{t:.12e},{:.12e},{:.12e},{:.12e},{:.6e}",
                s.x,
                s.y,
                s.nbar(),
                q
            )?;
        }
        Ok(())
    }
}

/// Integrates a schedule from a vacuum draw (or `init`) and records the trajectory.
pub fn integrate<S, R>(
    schedule: &S,
    resolver: &R,
    cfg: &IntegratorConfig,
    seed: u64,
    init: Option<QuadratureState>,
) -> Result<QuadratureTrajectory>
where
    S: Schedule + ?Sized,
    R: Resolver + ?Sized,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = match init {
        Some(q) => q,
        None => vacuum_state(&cfg.noise, &mut rng),
    };
    let stride = cfg.record_stride.max(1);
    let mut traj = QuadratureTrajectory {
        dt: cfg.dt * stride as f64,
        samples: Vec::new(),
        rng_seed: seed,
        q_i_track: Vec::new(),
        pump_window: Vec::new(),
    };
    integrate_observed(
        schedule,
        resolver,
        cfg,
        &mut rng,
        SimState {
            quad,
            n_filtered: 0.0,
        },
        |v| {
            if v.step % stride == 0 {
                traj.samples.push(v.state);
                traj.q_i_track.push(v.q_i);
                traj.pump_window.push(v.pump_window);
            }
            Flow::Continue
        },
    )?;
    Ok(traj)
}

/// Settings for a quasi-static pump sweep.
#[derive(Debug, Clone)]
pub struct HysteresisConfig {
    pub resolver: DeviceResolver,
    pub integrator: IntegratorConfig,
    /// Time spent at each grid power.
    pub settle_s: f64,
    /// Photon number above which the cavity counts as oscillating.
    pub n_osc_threshold: f64,
    pub seed: u64,
}

/// Sweeps the pump up then down along `p_grid` (ascending, W), carrying the cavity state.
///
/// Returns `(p_up, p_down)`: the first power that oscillates on the way up and
/// the lowest power still oscillating on the way down.
pub fn hysteresis_sweep(cfg: &HysteresisConfig, p_grid: &[f64]) -> Result<(f64, f64)> {
    if p_grid.is_empty() || p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "pump grid must be non-empty and strictly ascending".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SimState {
        quad: vacuum_state(&cfg.integrator.noise, &mut rng),
        n_filtered: 0.0,
    };

    let mut dwell = |p: f64, state: &mut SimState| -> Result<bool> {
        let schedule = ConstantSchedule::new(
            cfg.settle_s,
            Some(PumpState {
                p_pump: p,
                phi_pump: 0.0,
            }),
        );
        let steps = (cfg.settle_s / cfg.integrator.dt).round() as usize;
        let tail_start = steps - steps / 4;
        let (mut acc, mut count) = (0.0, 0usize);
        *state = integrate_observed(
            &schedule,
            &cfg.resolver,
            &cfg.integrator,
            &mut rng,
            *state,
            |v| {
                if v.step >= tail_start {
                    acc += v.state.nbar();
                    count += 1;
                }
                Flow::Continue
            },
        )?;
        Ok(acc / count.max(1) as f64 > cfg.n_osc_threshold)
    };

    let mut p_up = None;
    for &p in p_grid {
        if dwell(p, &mut state)? && p_up.is_none() {
            p_up = Some(p);
        }
    }
    let p_up = p_up.ok_or(Error::NoTransition)?;
    let mut p_down = None;
    for &p in p_grid.iter().rev() {
        if dwell(p, &mut state)? {
            p_down = Some(p);
        } else {
            break;
        }
    }
    let p_down = p_down.ok_or(Error::NoTransition)?;
    Ok((p_up, p_down.min(p_up)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_angular;
    use proptest::prelude::*;
    use rand::Rng;

    fn op(delta_mhz: f64, zeta_mhz: f64, gamma_bar_mhz: f64, kerr_hz: f64) -> OperatingPoint {
        let gb = hz_to_angular(gamma_bar_mhz * 1e6);
        OperatingPoint::synthetic(
            hz_to_angular(delta_mhz * 1e6),
            hz_to_angular(zeta_mhz * 1e6),
            hz_to_angular(kerr_hz),
            0.1 * gb,
            1.9 * gb,
        )
    }

    fn finite_diff_drift(s: QuadratureState, op: &OperatingPoint) -> (f64, f64) {
        let h = 1e-6 * s.amplitude().max(1.0);
        let g = |x, y| metapotential(x, y, op);
        let dgdx = (g(s.x + h, s.y) - g(s.x - h, s.y)) / (2.0 * h);
        let dgdy = (g(s.x, s.y + h) - g(s.x, s.y - h)) / (2.0 * h);
        let gb = op.gamma_bar;
        (-gb * s.x - gb * dgdy, -gb * s.y + gb * dgdx)
    }

    #[test]
    fn metapotential_examples() {
        let o = op(0.0, 1.0, 0.5, 0.0);
        assert_eq!(metapotential(0.0, 0.0, &o), 0.0);
        assert!((metapotential(1.0, 0.0, &o) - 1.0).abs() < 1e-12);
        let o = op(0.3, 0.8, 0.5, -0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (x, y) = (
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
            );
            assert_eq!(metapotential(x, y, &o), metapotential(-x, -y, &o));
        }
    }

    #[test]
    fn drift_is_the_gradient_flow_of_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let o = op(
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..3.0),
                rng.random_range(0.1..2.0),
                rng.random_range(-5.0..-0.01),
            );
            let s =
                QuadratureState::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let (ax, ay) = drift(s, &o, None);
            let (fx, fy) = finite_diff_drift(s, &o);
            let scale = ax.abs().max(ay.abs());
            assert!(
                (ax - fx).abs() < 1e-5 * scale && (ay - fy).abs() < 1e-5 * scale,
                "{s:?}: {ax},{ay} vs {fx},{fy}"
            );
        }
        assert_eq!(
            drift(QuadratureState::ORIGIN, &op(0.1, 1.0, 0.5, -1.0), None),
            (0.0, 0.0)
        );
    }

    #[test]
    fn drive_enters_as_re_minus_im() {
        let o = op(0.0, 0.0, 0.5, 0.0);
        let (dx, dy) = drift(QuadratureState::ORIGIN, &o, Some(Complex64::new(3.0, 2.0)));
        let s = o.kappa.sqrt();
        assert_eq!((dx, dy), (3.0 * s, -2.0 * s));
    }

    #[test]
    fn closed_form_amplitude() {
        let o = op(0.0, 1.0, 0.6, -0.02);
        let set = steady_states(&o).unwrap();
        assert_eq!(set.oscillating.len(), 2);
        let expected = (0.8e6f64 / 0.02).sqrt();
        for s in &set.oscillating {
            assert!((s.alpha - expected).abs() / expected < 1e-12);
        }
        assert!((set.oscillating[1].theta - set.oscillating[0].theta - PI).abs() < 1e-15);
        for s in &set.oscillating {
            let (dx, dy) = drift(s.state(), &o, None);
            assert!(dx.hypot(dy) < 1e-9 * o.gamma_bar * s.alpha, "{dx} {dy}");
        }
    }

    #[test]
    fn below_boundary_only_quiet() {
        let set = steady_states(&op(0.8, 1.0, 0.7, -0.02)).unwrap();
        assert!(set.oscillating.is_empty());
        assert_eq!(set.quiet, QuadratureState::ORIGIN);
        assert!(matches!(
            steady_states(&op(0.0, 1.0, 0.6, 0.0)),
            Err(Error::UnboundedAmplitude)
        ));
    }

    #[test]
    fn noiseless_unpumped_decay_rate() {
        let o = op(0.2, 0.0, 0.5, 0.0);
        let cfg = IntegratorConfig::new(1e-9, NoiseConfig::OFF, None);
        let sched = ConstantSchedule::new(2e-6, None);
        let traj = integrate(
            &sched,
            &FixedResolver(o),
            &cfg,
            0,
            Some(QuadratureState::new(10.0, 0.0)),
        )
        .unwrap();
        let t_end = traj.times().last().unwrap();
        let expected = 10.0 * (-o.gamma_bar * t_end).exp();
        let got = traj.last().amplitude();
        // Euler step factor |1 + λdt| vs exp(λdt): relative O(γ̄ dt) over the run
        assert!(
            (got - expected).abs() / expected < 0.02,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn perturbed_start_converges_to_closed_form() {
        let o = op(0.1, 1.0, 0.6, -2.0);
        let set = steady_states(&o).unwrap();
        let cfg = IntegratorConfig::new(0.01 / hz_to_angular(1e6), NoiseConfig::OFF, None);
        let sched = ConstantSchedule::new(
            40e-6,
            Some(PumpState {
                p_pump: 0.0,
                phi_pump: PI,
            }),
        );
        let traj = integrate(
            &sched,
            &FixedResolver(o),
            &cfg,
            0,
            Some(QuadratureState::new(0.3, -0.2)),
        )
        .unwrap();
        let end = traj.last();
        let alpha = set.oscillating[0].alpha;
        assert!((end.amplitude() - alpha).abs() / alpha < 0.01);
        let near = set
            .oscillating
            .iter()
            .any(|s| (end.x - s.state().x).hypot(end.y - s.state().y) < 0.01 * alpha);
        assert!(near);
    }

    #[test]
    fn step_size_is_enforced() {
        let o = op(0.0, 1.0, 0.6, -1.0);
        let cfg = IntegratorConfig::new(1e-7, NoiseConfig::OFF, None);
        let sched = ConstantSchedule::new(
            1e-6,
            Some(PumpState {
                p_pump: 0.0,
                phi_pump: 0.0,
            }),
        );
        assert!(matches!(
            integrate(&sched, &FixedResolver(o), &cfg, 0, None),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn replay_is_bit_identical() {
        let o = op(0.1, 0.9, 0.6, -1.0);
        let cfg = IntegratorConfig::new(2e-9, NoiseConfig::default(), None);
        let sched = ConstantSchedule::new(
            5e-6,
            Some(PumpState {
                p_pump: 0.0,
                phi_pump: 0.0,
            }),
        );
        let a = integrate(&sched, &FixedResolver(o), &cfg, 99, None).unwrap();
        let b = integrate(&sched, &FixedResolver(o), &cfg, 99, None).unwrap();
        let c = integrate(&sched, &FixedResolver(o), &cfg, 100, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t_s,x,y,nbar,q_i_eff\n"));
    }

    #[test]
    fn noiseless_runs_keep_their_phase_sector() {
        let o = op(0.05, 1.0, 0.6, -2.0);
        let set = steady_states(&o).unwrap();
        let axis = set.oscillating[0].state();
        let cfg = IntegratorConfig::new(0.01 / hz_to_angular(1e6), NoiseConfig::OFF, None);
        let sched = ConstantSchedule::new(
            20e-6,
            Some(PumpState {
                p_pump: 0.0,
                phi_pump: PI,
            }),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s0 = QuadratureState::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let mut flips = 0;
            let mut sector: Option<f64> = None;
            integrate_observed(
                &sched,
                &FixedResolver(o),
                &cfg,
                &mut rng.clone(),
                SimState {
                    quad: s0,
                    n_filtered: 0.0,
                },
                |v| {
                    // sector is fixed once the run has reached one of the lobes
                    let proj = (v.state.x * axis.x + v.state.y * axis.y).signum();
                    if v.state.amplitude() > 0.5 * set.oscillating[0].alpha {
                        match sector {
                            None => sector = Some(proj),
                            Some(s) if s != proj => {
                                flips += 1;
                                sector = Some(proj);
                            }
                            _ => {}
                        }
                    }
                    Flow::Continue
                },
            )
            .unwrap();
            assert!(sector.is_some());
            assert_eq!(flips, 0);
        }
    }

    #[test]
    fn quiet_state_noise_scales_linearly() {
        let o = op(0.0, 0.3, 0.6, -1.0);
        let sched = ConstantSchedule::new(
            400e-6,
            Some(PumpState {
                p_pump: 0.0,
                phi_pump: PI,
            }),
        );
        let mean_n = |rate: f64| {
            let cfg = IntegratorConfig::new(
                0.02 / o.gamma_bar,
                NoiseConfig {
                    noise_rate: rate,
                    eta: 1.0,
                },
                None,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let (mut acc, mut count) = (0.0, 0);
            integrate_observed(
                &sched,
                &FixedResolver(o),
                &cfg,
                &mut rng,
                SimState::default(),
                |v| {
                    if v.t > 20e-6 {
                        acc += v.state.nbar();
                        count += 1;
                    }
                    Flow::Continue
                },
            )
            .unwrap();
            acc / count as f64
        };
        let (a, b) = (mean_n(0.5), mean_n(2.0));
        assert!((b / a - 4.0).abs() / 4.0 < 0.05, "{a} {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn oscillating_pair_is_pi_apart(delta in -1.0f64..1.0, extra in 0.05f64..2.0, gb in 0.1f64..1.0, k in -50.0f64..-0.01) {
            let zeta = (delta * delta + gb * gb).sqrt() + extra;
            let set = steady_states(&op(delta, zeta, gb, k)).unwrap();
            prop_assert_eq!(set.oscillating.len(), 2);
            let (a, b) = (set.oscillating[0], set.oscillating[1]);
            prop_assert!((b.theta - a.theta - PI).abs() < 1e-12);
            prop_assert_eq!(a.alpha, b.alpha);
        }

        #[test]
        fn existence_matches_inequality(delta in -2.0f64..2.0, zeta in 0.0f64..3.0, gb in 0.1f64..1.5) {
            let o = op(delta, zeta, gb, -1.0);
            let exists = !steady_states(&o).unwrap().oscillating.is_empty();
            prop_assert_eq!(exists, o.zeta_mag.powi(2) > o.delta_big.powi(2) + o.gamma_bar.powi(2));
        }
    }
}
