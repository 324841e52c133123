//! Subcommand implementations. Each writes its files into an [`OutputDir`].

use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, SweepCommand, ThresholdModel};
use super::plot::{Plot, Series};
use super::{CliError, CliResult, OutputDir};
use crate::device::{loaded_q, DeviceParams};
use crate::dynamics::DeviceResolver;
use crate::error::Error;
use crate::protocol::{
    build_cpmg_sequence, build_stimulus_sequence, click_time_histogram, clicks_within, run_shots,
    shot_seed, summarize, window_histogram, write_shots_csv, CpmgPlan, PulseSequence, ShotConfig,
    ShotRecord, ShotSummary, StimulusPlan,
};
use crate::s11fit::{absorbed_fraction, fit_s11, read_spectrum_csv, subtract_baseline, S11Fit};
use crate::stats::{
    dcr, e_of_n, efficiency, fit_e_of_n, optimal_n, optimal_n_real, photons_from_energy, roc,
    sensitivity_fit, wilson_interval, write_e_of_n_csv, write_roc_csv, DarkCountRate,
    DetectionStats, EofNFit, EofNRow, SigmoidFit, Z95,
};
use crate::threshold::{boundary_map, pth_boundary, ThresholdMap};
use crate::units::{angular_to_hz, dbm_to_watts, hz_to_angular, watts_to_dbm};

/// Scalar results a sweep tabulates.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub headline: Vec<(String, f64)>,
    pub detection: Option<DetectionStats>,
}

/// Fit result or the reason it failed.
#[derive(Debug, Clone, Serialize)]
pub struct Fitted<T> {
    pub fit: Option<T>,
    pub error: Option<String>,
}

impl<T> From<crate::Result<T>> for Fitted<T> {
    fn from(r: crate::Result<T>) -> Self {
        match r {
            Ok(fit) => Self {
                fit: Some(fit),
                error: None,
            },
            Err(e) => Self {
                fit: None,
                error: Some(e.to_string()),
            },
        }
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

/// Sequence-building failures come from the configured timings.
fn sequence_err(e: Error) -> CliError {
    match e {
        Error::Sequence(m) => CliError::Config(m),
        other => other.into(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_rows<W: std::io::Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header).map_err(crate::protocol::csv_err)?;
    for r in rows {
        w.write_record(r).map_err(crate::protocol::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(
    command: SweepCommand,
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
) -> CliResult<Outcome> {
    match command {
        SweepCommand::ThresholdMap => threshold_map(cfg, out),
        SweepCommand::Shots => shots(cfg, out),
        SweepCommand::Cpmg => cpmg(cfg, out),
    }
}

fn exact_maps(
    grid: &[f64],
    i_dc: f64,
    q_i: &[f64],
    dev: &DeviceParams,
) -> CliResult<Vec<ThresholdMap>> {
    q_i.iter()
        .map(|&q| {
            let p_th = grid
                .iter()
                .map(|&d| match pth_boundary(d, i_dc, q, dev) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::NoFiniteThreshold { .. }) => Ok(None),
                    Err(e) => Err(CliError::from(e)),
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(ThresholdMap {
                delta_p_grid: grid.to_vec(),
                p_th,
                q_i_assumed: q,
                i_dc,
                device: *dev,
            })
        })
        .collect()
}

/// `threshold_map.csv` (`delta_p_hz,p_th_dbm,q_i`) and an overlay plot.
pub fn threshold_map(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<Outcome> {
    let tm = cfg
        .threshold_map
        .as_ref()
        .ok_or_else(|| missing("threshold_map"))?;
    let dev = cfg.device_params();
    let n = tm.n_points;
    let grid_mhz: Vec<f64> = (0..n)
        .map(|k| {
            if n == 1 {
                tm.delta_p_min_mhz
            } else {
                tm.delta_p_min_mhz
                    + (tm.delta_p_max_mhz - tm.delta_p_min_mhz) * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    let grid: Vec<f64> = grid_mhz.iter().map(|m| hz_to_angular(m * 1e6)).collect();
    let maps = match tm.model {
        ThresholdModel::Analytic => boundary_map(&grid, cfg.i_dc(), &tm.q_i, &dev)?,
        ThresholdModel::Boundary => exact_maps(&grid, cfg.i_dc(), &tm.q_i, &dev)?,
    };
    let dbm = |p: Option<f64>| p.and_then(|p| watts_to_dbm(p).ok());
    let mut rows = Vec::new();
    for m in &maps {
        for (d, p) in m.delta_p_grid.iter().zip(&m.p_th) {
            rows.push(vec![
                angular_to_hz(*d).to_string(),
                fmt_opt(dbm(*p)),
                m.q_i_assumed.to_string(),
            ]);
        }
    }
    out.csv("threshold_map.csv", |w| {
        csv_rows(w, &["delta_p_hz", "p_th_dbm", "q_i"], &rows)
    })?;
    if cfg.output.svg {
        let series = maps
            .iter()
            .map(|m| Series {
                label: format!("Q_i = {}", m.q_i_assumed),
                points: grid_mhz
                    .iter()
                    .zip(&m.p_th)
                    .map(|(x, p)| (x + tm.delta_p_offset_mhz, dbm(*p).unwrap_or(f64::NAN)))
                    .collect(),
                markers: n < 30,
            })
            .collect();
        let x_label = if tm.delta_p_offset_mhz != 0.0 {
            format!(
                "pump detuning (MHz, shifted by {} MHz)",
                tm.delta_p_offset_mhz
            )
        } else {
            "pump detuning (MHz)".into()
        };
        out.svg(
            "threshold_map.svg",
            &Plot {
                title: "self-oscillation threshold".into(),
                x_label,
                y_label: "P_th (dBm)".into(),
                log_x: false,
                log_y: false,
                series,
            },
        )?;
    }
    let headline = maps
        .iter()
        .map(|m| {
            let min = m.argmin().and_then(|k| dbm(m.p_th[k])).unwrap_or(f64::NAN);
            (format!("min_p_th_dbm_q{}", m.q_i_assumed), min)
        })
        .collect();
    Ok(Outcome {
        headline,
        detection: None,
    })
}

fn shot_config(cfg: &ExperimentConfig) -> ShotConfig<DeviceResolver> {
    ShotConfig {
        resolver: cfg.resolver(),
        integrator: cfg.integrator(),
        detector: cfg.detector(),
    }
}

/// Base seeds for the signal and control ensembles; every point of a run reuses them.
fn pair_seeds(seed: u64) -> (u64, u64) {
    (shot_seed(seed, 0), shot_seed(seed, 1))
}

struct Pair {
    signal: Vec<ShotRecord>,
    control: Vec<ShotRecord>,
}

impl Pair {
    fn run(
        signal: &PulseSequence,
        control: &PulseSequence,
        cfg: &ExperimentConfig,
        n: usize,
        phase_mod: bool,
    ) -> CliResult<Self> {
        let sc = shot_config(cfg);
        let (s_seed, c_seed) = pair_seeds(cfg.seed);
        Ok(Self {
            signal: run_shots(signal, &sc, n, s_seed, phase_mod)?,
            control: run_shots(control, &sc, n, c_seed, phase_mod)?,
        })
    }

    fn summaries(&self) -> (ShotSummary, ShotSummary) {
        (summarize(&self.signal), summarize(&self.control))
    }

    fn stats(&self) -> crate::Result<DetectionStats> {
        let (s, c) = self.summaries();
        efficiency(s.n_clicks, s.n_shots, c.n_clicks, c.n_shots)
    }
}

#[derive(Serialize)]
struct ShotsReport {
    detection: Option<DetectionStats>,
    dark_count_rate: Option<DarkCountRate>,
    signal: ShotSummary,
    control: ShotSummary,
    /// Some shots failed and were left out of the statistics.
    partial: bool,
    tau_tot_s: f64,
    stimulus_energy_j: f64,
    stimulus_photons: f64,
}

#[derive(Serialize)]
struct SensitivityReport {
    collapsed: Fitted<SigmoidFit>,
    j_half_photons: Option<f64>,
    per_p0: Vec<(f64, Fitted<SigmoidFit>)>,
}

/// Paired stimulus/control ensembles, plus an optional stimulus-energy sweep.
pub fn shots(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<Outcome> {
    let sc = cfg.shots.as_ref().ok_or_else(|| missing("shots"))?;
    let omega0 = cfg.omega0();
    let f0 = angular_to_hz(omega0);
    let plan = |p0_w: f64, tau1_s: f64| StimulusPlan {
        tau0_s: sc.tau0_us * 1e-6,
        tau1_s,
        tau2_s: sc.tau2_us * 1e-6,
        p0_w,
        omega0,
        p_pump: cfg.p_pump(),
        phi_pump: cfg.operating.phi_pump_rad,
        stimulus_phase: sc.stimulus_phase_rad,
    };
    let base = plan(dbm_to_watts(sc.p0_dbm), sc.tau1_us * 1e-6);
    let signal_seq = build_stimulus_sequence(&base, true).map_err(sequence_err)?;
    let control_seq = build_stimulus_sequence(&base, false).map_err(sequence_err)?;
    let pair = Pair::run(&signal_seq, &control_seq, cfg, sc.n_shots, sc.phase_mod)?;
    out.csv("shots_signal.csv", |w| write_shots_csv(&pair.signal, w))?;
    out.csv("shots_control.csv", |w| write_shots_csv(&pair.control, w))?;

    let tau_tot = signal_seq.total_duration;
    let hs = click_time_histogram(&pair.signal, tau_tot, sc.hist_bins);
    let hc = click_time_histogram(&pair.control, tau_tot, sc.hist_bins);
    let rows: Vec<Vec<String>> = hs
        .iter()
        .zip(&hc)
        .map(|(s, c)| vec![s.0.to_string(), s.1.to_string(), c.1.to_string()])
        .collect();
    out.csv("click_hist.csv", |w| {
        csv_rows(w, &["t_start_s", "signal_clicks", "control_clicks"], &rows)
    })?;

    let (s_sum, c_sum) = pair.summaries();
    let ok_control: Vec<&ShotRecord> = pair.control.iter().filter(|r| r.error.is_none()).collect();
    let dark_times: Vec<f64> = ok_control.iter().filter_map(|r| r.t_click).collect();
    let detection = pair.stats();
    let dcr_result = dcr(&dark_times, ok_control.len(), tau_tot);
    let energy = base.p0_w * base.tau1_s;
    let report = ShotsReport {
        detection: detection.as_ref().ok().copied(),
        dark_count_rate: dcr_result.as_ref().ok().copied(),
        partial: s_sum.n_errors + c_sum.n_errors > 0,
        signal: s_sum,
        control: c_sum,
        tau_tot_s: tau_tot,
        stimulus_energy_j: energy,
        stimulus_photons: photons_from_energy(energy, f0)?,
    };
    out.json("stats.json", &report)?;

    let mut outcome = Outcome::default();
    if let Some(sweep) = &sc.energy_sweep {
        let mut rows = Vec::new();
        let mut per_p0 = Vec::new();
        let mut all = Vec::new();
        let mut series = Vec::new();
        for &p0_dbm in &sweep.p0_dbm {
            let p0 = dbm_to_watts(p0_dbm);
            let mut pts = Vec::new();
            for &j_zj in &sweep.j_zj {
                let j = j_zj * 1e-21;
                let p = plan(p0, j / p0);
                let pr = Pair::run(
                    &build_stimulus_sequence(&p, true).map_err(sequence_err)?,
                    &build_stimulus_sequence(&p, false).map_err(sequence_err)?,
                    cfg,
                    sc.n_shots,
                    sc.phase_mod,
                )?;
                let st = pr.stats()?;
                let (s, c) = pr.summaries();
                rows.push(vec![
                    p0_dbm.to_string(),
                    j_zj.to_string(),
                    (p.tau1_s * 1e6).to_string(),
                    photons_from_energy(j, f0)?.to_string(),
                    st.p_detect.to_string(),
                    st.p_dark.to_string(),
                    st.e.to_string(),
                    st.ci_low.to_string(),
                    st.ci_high.to_string(),
                    (s.n_errors + c.n_errors).to_string(),
                ]);
                pts.push((j, st.e));
                all.push((j, st.e));
            }
            series.push(Series {
                label: format!("P0 = {p0_dbm} dBm"),
                points: pts.iter().map(|&(j, e)| (j * 1e21, e)).collect(),
                markers: true,
            });
            per_p0.push((p0_dbm, Fitted::from(sensitivity_fit(&pts))));
        }
        out.csv("e_of_j.csv", |w| {
            csv_rows(
                w,
                &[
                    "p0_dbm", "j_zj", "tau1_us", "photons", "p_detect", "p_dark", "e", "ci_low",
                    "ci_high", "n_errors",
                ],
                &rows,
            )
        })?;
        let collapsed = Fitted::from(sensitivity_fit(&all));
        let j_half_photons = collapsed
            .fit
            .and_then(|f| photons_from_energy(f.j_half, f0).ok());
        if let Some(f) = collapsed.fit {
            outcome.headline.push(("j_half_zj".into(), f.j_half * 1e21));
        }
        out.json(
            "sensitivity.json",
            &SensitivityReport {
                collapsed,
                j_half_photons,
                per_p0,
            },
        )?;
        if cfg.output.svg {
            out.svg(
                "e_of_j.svg",
                &Plot {
                    title: "efficiency against stimulus energy".into(),
                    x_label: "J = P0 τ1 (zJ)".into(),
                    y_label: "E".into(),
                    log_x: true,
                    log_y: false,
                    series,
                },
            )?;
        }
    }

    let detection = detection?;
    let rate = dcr_result?;
    let mut headline = vec![
        ("e".to_string(), detection.e),
        ("ci_low".into(), detection.ci_low),
        ("ci_high".into(), detection.ci_high),
        ("p_detect".into(), detection.p_detect),
        ("p_dark".into(), detection.p_dark),
        ("dcr_hz".into(), rate.rate_hz),
    ];
    headline.append(&mut outcome.headline);
    Ok(Outcome {
        headline,
        detection: Some(detection),
    })
}

#[derive(Serialize)]
struct CpmgPoint {
    n_refocus: usize,
    detection: DetectionStats,
    echo: ShotSummary,
    control: ShotSummary,
}

#[derive(Serialize)]
struct FirstWindow {
    p_detect: f64,
    p_detect_ci: (f64, f64),
    p_dark: f64,
    p_dark_ci: (f64, f64),
    n_shots: usize,
}

#[derive(Serialize)]
struct CpmgReport {
    fit: Fitted<EofNFit>,
    optimal_n: Option<usize>,
    optimal_n_real: Option<f64>,
    optimal_n_note: Option<String>,
    e_at_optimal_n: Option<f64>,
    /// Click rates in the first pump window, pooled over every N.
    empirical_first_window: FirstWindow,
    partial: bool,
    per_n: Vec<CpmgPoint>,
}

/// CPMG-N ensembles for each configured N, with the E(N) fit and optimum.
pub fn cpmg(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<Outcome> {
    let cp = cfg.cpmg.as_ref().ok_or_else(|| missing("cpmg"))?;
    let omega0 = cfg.omega0();
    let plan = |n: usize, with_echo: bool| CpmgPlan {
        n_refocus: n,
        tau0_s: cp.tau0_us * 1e-6,
        tau1_s: cp.tau1_us * 1e-6,
        tau2_s: cp.tau2_us.unwrap_or(cp.tau0_us) * 1e-6,
        echo: cp.echo(omega0),
        pad_lead_s: cp.pad_lead_us * 1e-6,
        pad_trail_s: cp.pad_trail_us * 1e-6,
        p_pump: cfg.p_pump(),
        phi_pump: cfg.operating.phi_pump_rad,
        with_echo,
    };
    let mut points = Vec::new();
    let mut hist_rows = Vec::new();
    let (mut first_s, mut first_c, mut first_n) = (0, 0, 0);
    let mut partial = false;
    for &n in &cp.n_refocus {
        let echo_seq = build_cpmg_sequence(&plan(n, true)).map_err(sequence_err)?;
        let control_seq = build_cpmg_sequence(&plan(n, false)).map_err(sequence_err)?;
        let pair = Pair::run(&echo_seq, &control_seq, cfg, cp.n_shots, cp.phase_mod)?;
        out.csv(&format!("shots_n{n}_echo.csv"), |w| {
            write_shots_csv(&pair.signal, w)
        })?;
        out.csv(&format!("shots_n{n}_control.csv"), |w| {
            write_shots_csv(&pair.control, w)
        })?;
        let (hs, hc) = (
            window_histogram(&pair.signal, n),
            window_histogram(&pair.control, n),
        );
        for k in 0..n {
            hist_rows.push(vec![
                n.to_string(),
                (k + 1).to_string(),
                hs[k].to_string(),
                hc[k].to_string(),
            ]);
        }
        let (s1, ns) = clicks_within(&pair.signal, 1);
        let (c1, nc) = clicks_within(&pair.control, 1);
        first_s += s1;
        first_c += c1;
        first_n += ns.min(nc);
        let (echo, control) = pair.summaries();
        partial |= echo.n_errors + control.n_errors > 0;
        points.push(CpmgPoint {
            n_refocus: n,
            detection: pair.stats()?,
            echo,
            control,
        });
    }
    out.csv("cpmg_windows.csv", |w| {
        csv_rows(
            w,
            &["n_refocus", "window", "echo_clicks", "control_clicks"],
            &hist_rows,
        )
    })?;

    let data: Vec<(usize, f64, f64)> = points
        .iter()
        .map(|p| {
            let sd = (p.detection.ci_high - p.detection.ci_low) / (2.0 * Z95);
            (p.n_refocus, p.detection.e, 1.0 / (sd * sd).max(1e-12))
        })
        .collect();
    let fit = fit_e_of_n(&data);
    let rows: Vec<EofNRow> = points
        .iter()
        .map(|p| EofNRow {
            n: p.n_refocus,
            e_measured: p.detection.e,
            ci_low: p.detection.ci_low,
            ci_high: p.detection.ci_high,
            e_fit: fit
                .as_ref()
                .map_or(f64::NAN, |f| e_of_n(p.n_refocus, f.p_detect, f.p_dark)),
        })
        .collect();
    out.csv("e_of_n.csv", |w| write_e_of_n_csv(&rows, w))?;

    let (mut best_n, mut best_real, mut note, mut e_best) = (None, None, None, None);
    if let Ok(f) = &fit {
        match optimal_n(f.p_detect, f.p_dark) {
            Ok(n) => {
                best_n = Some(n);
                best_real = optimal_n_real(f.p_detect, f.p_dark).ok();
                e_best = Some(e_of_n(n, f.p_detect, f.p_dark));
            }
            Err(e) => note = Some(e.to_string()),
        }
    }
    let frac = |k: usize| {
        if first_n == 0 {
            f64::NAN
        } else {
            k as f64 / first_n as f64
        }
    };
    let report = CpmgReport {
        fit: Fitted {
            fit: fit.as_ref().ok().copied(),
            error: fit.as_ref().err().map(|e| e.to_string()),
        },
        optimal_n: best_n,
        optimal_n_real: best_real,
        optimal_n_note: note,
        e_at_optimal_n: e_best,
        empirical_first_window: FirstWindow {
            p_detect: frac(first_s),
            p_detect_ci: wilson_interval(first_s, first_n.max(1), Z95),
            p_dark: frac(first_c),
            p_dark_ci: wilson_interval(first_c, first_n.max(1), Z95),
            n_shots: first_n,
        },
        partial,
        per_n: points,
    };
    out.json("cpmg_fit.json", &report)?;
    if cfg.output.svg {
        let mut series = vec![Series {
            label: "measured".into(),
            points: rows.iter().map(|r| (r.n as f64, r.e_measured)).collect(),
            markers: true,
        }];
        if let Ok(f) = &fit {
            let n_max = rows
                .iter()
                .map(|r| r.n)
                .max()
                .unwrap_or(1)
                .max(best_n.unwrap_or(1));
            series.push(Series {
                label: "fit".into(),
                points: (1..=n_max)
                    .map(|n| (n as f64, e_of_n(n, f.p_detect, f.p_dark)))
                    .collect(),
                markers: false,
            });
        }
        out.svg(
            "e_of_n.svg",
            &Plot {
                title: "efficiency against refocusing pulses".into(),
                x_label: "N".into(),
                y_label: "E".into(),
                log_x: false,
                log_y: false,
                series,
            },
        )?;
    }
    let f = fit?;
    let mut headline = vec![
        ("p_detect_fit".to_string(), f.p_detect),
        ("p_dark_fit".into(), f.p_dark),
    ];
    headline.push(("optimal_n".into(), best_n.map_or(f64::NAN, |n| n as f64)));
    Ok(Outcome {
        headline,
        detection: None,
    })
}

/// One subdirectory per value, a summary table and, for shot sweeps, an ROC.
pub fn sweep(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<Outcome> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (k, &v) in sw.values.iter().enumerate() {
        let sub = cfg.with_value(&sw.parameter, v)?;
        let mut dir = out.child(&format!("point_{k:03}"), sub.hash())?;
        match run(sw.command, &sub, &mut dir) {
            Ok(o) => results.push((v, Some(o), String::new())),
            Err(CliError::Runtime(m)) => {
                failures.push(format!("{} = {v}: {m}", sw.parameter));
                results.push((v, None, m));
            }
            Err(e) => return Err(e),
        }
    }
    let names: Vec<String> = results
        .iter()
        .find_map(|r| r.1.as_ref())
        .map_or_else(Vec::new, |o| {
            o.headline.iter().map(|h| h.0.clone()).collect()
        });
    let mut header = vec!["index".to_string(), "value".into()];
    header.extend(names.iter().cloned());
    header.push("error".into());
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(k, (v, o, err))| {
            let mut row = vec![k.to_string(), v.to_string()];
            for name in &names {
                let val = o
                    .as_ref()
                    .and_then(|o| o.headline.iter().find(|h| &h.0 == name))
                    .map(|h| h.1);
                row.push(fmt_opt(val));
            }
            row.push(err.clone());
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("sweep.csv", |w| csv_rows(w, &header_refs, &rows))?;

    let detections: Vec<DetectionStats> = results
        .iter()
        .filter_map(|r| r.1.as_ref().and_then(|o| o.detection))
        .collect();
    if !detections.is_empty() {
        let curve = roc(&detections)?;
        out.csv("roc.csv", |w| write_roc_csv(&curve, w))?;
        out.json("roc.json", &curve)?;
    }
    if cfg.output.svg && !names.is_empty() {
        let series = vec![Series {
            label: names[0].clone(),
            points: results
                .iter()
                .map(|(v, o, _)| (*v, o.as_ref().map_or(f64::NAN, |o| o.headline[0].1)))
                .collect(),
            markers: true,
        }];
        out.svg(
            "sweep.svg",
            &Plot {
                title: format!("{} sweep", sw.parameter),
                x_label: sw.parameter.clone(),
                y_label: names[0].clone(),
                log_x: false,
                log_y: false,
                series,
            },
        )?;
    }
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} sweep point(s) failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct S11Report {
    fit: S11Fit,
    q_l: f64,
    absorbed_fraction: f64,
    n_points: usize,
    baseline_removed: bool,
}

fn read_spectrum(path: &Path) -> CliResult<crate::s11fit::ReflectionSpectrum> {
    let f = std::fs::File::open(path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    read_spectrum_csv(f).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Fits `(f0, Q_i, Q_c)` to a reflection spectrum and writes `s11_fit.json`.
pub fn s11_fit(input: &Path, baseline: Option<&Path>, out: &mut OutputDir) -> CliResult<S11Fit> {
    let mut spec = read_spectrum(input)?;
    if let Some(b) = baseline {
        spec = subtract_baseline(&spec, &read_spectrum(b)?)?;
    }
    let fit = fit_s11(&spec, None)?;
    out.json(
        "s11_fit.json",
        &S11Report {
            fit,
            q_l: loaded_q(fit.q_i, fit.q_c),
            absorbed_fraction: absorbed_fraction(fit.q_i, fit.q_c),
            n_points: spec.freqs_hz.len(),
            baseline_removed: baseline.is_some(),
        },
    )?;
    Ok(fit)
}
