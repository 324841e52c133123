//! Detector statistics: efficiency, dark-count rate, ROC, CPMG repetition law and sensitivity fits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{least_squares, nelder_mead};
use crate::protocol::csv_err;
use crate::units::H_PLANCK;

/// Two-sided 95% standard-normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    /// P(T|S).
    pub p_detect: f64,
    /// P(T|S̃).
    pub p_dark: f64,
    pub e: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_shots_s: usize,
    pub n_shots_ns: usize,
}

/// `E = P(T|S) − P(T|S̃)` with the two Wilson intervals combined in quadrature on each side.
pub fn efficiency(
    clicks_s: usize,
    n_s: usize,
    clicks_ns: usize,
    n_ns: usize,
) -> Result<DetectionStats> {
    if n_s == 0 || n_ns == 0 {
        return Err(Error::InvalidInput(
            "efficiency needs at least one shot of each sequence".into(),
        ));
    }
    if clicks_s > n_s || clicks_ns > n_ns {
        return Err(Error::InvalidInput("more clicks than shots".into()));
    }
    let p_detect = clicks_s as f64 / n_s as f64;
    let p_dark = clicks_ns as f64 / n_ns as f64;
    let (s_lo, s_hi) = wilson_interval(clicks_s, n_s, Z95);
    let (d_lo, d_hi) = wilson_interval(clicks_ns, n_ns, Z95);
    let e = p_detect - p_dark;
    let down = (p_detect - s_lo).hypot(d_hi - p_dark);
    let up = (s_hi - p_detect).hypot(p_dark - d_lo);
    Ok(DetectionStats {
        p_detect,
        p_dark,
        e,
        ci_low: (e - down).max(-1.0),
        ci_high: (e + up).min(1.0),
        n_shots_s: n_s,
        n_shots_ns: n_ns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkCountRate {
    pub rate_hz: f64,
    /// Smallest measurable rate, `1/(N τ_tot)`.
    pub floor_hz: f64,
    pub n_clicks: usize,
}

/// Latch-corrected dark-count rate `n / (N τ_tot − Σ(τ_tot − t_i))`.
pub fn dcr(click_times: &[f64], n_shots: usize, tau_tot: f64) -> Result<DarkCountRate> {
    if n_shots == 0 || !(tau_tot > 0.0) {
        return Err(Error::InvalidInput(
            "dcr needs n_shots >= 1 and tau_tot > 0".into(),
        ));
    }
    if click_times.len() > n_shots {
        return Err(Error::InvalidInput("more clicks than shots".into()));
    }
    if let Some(t) = click_times.iter().find(|t| !(**t >= 0.0 && **t <= tau_tot)) {
        return Err(Error::InvalidInput(format!(
            "click time {t:e} s outside [0, {tau_tot:e}] s"
        )));
    }
    let exposure = n_shots as f64 * tau_tot;
    let lost: f64 = click_times.iter().map(|t| tau_tot - t).sum();
    let n = click_times.len();
    Ok(DarkCountRate {
        rate_hz: if n == 0 {
            0.0
        } else {
            n as f64 / (exposure - lost)
        },
        floor_hz: 1.0 / exposure,
        n_clicks: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub p_dark: f64,
    pub p_detect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sweep points sorted by `p_dark`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC points from a sweep; the area uses the trapezoid rule with (0,0) and (1,1) added.
pub fn roc(stats_sweep: &[DetectionStats]) -> Result<RocCurve> {
    if stats_sweep.is_empty() {
        return Err(Error::InvalidInput("roc needs at least one point".into()));
    }
    let mut points: Vec<RocPoint> = stats_sweep
        .iter()
        .map(|s| RocPoint {
            p_dark: s.p_dark,
            p_detect: s.p_detect,
        })
        .collect();
    points.sort_by(|a, b| {
        a.p_dark
            .total_cmp(&b.p_dark)
            .then(a.p_detect.total_cmp(&b.p_detect))
    });
    let mut path = vec![RocPoint {
        p_dark: 0.0,
        p_detect: 0.0,
    }];
    path.extend_from_slice(&points);
    path.push(RocPoint {
        p_dark: 1.0,
        p_detect: 1.0,
    });
    let auc = path
        .windows(2)
        .map(|w| 0.5 * (w[1].p_dark - w[0].p_dark) * (w[1].p_detect + w[0].p_detect))
        .sum();
    Ok(RocCurve { points, auc })
}

/// Efficiency after `n` independent repetitions, `(1 − P(T|S̃))ⁿ − (1 − P(T|S))ⁿ`.
pub fn e_of_n(n: usize, p_detect: f64, p_dark: f64) -> f64 {
    (1.0 - p_dark).powi(n as i32) - (1.0 - p_detect).powi(n as i32)
}

fn check_pair(p_detect: f64, p_dark: f64) -> Result<()> {
    if !(p_dark >= 0.0 && p_dark < p_detect && p_detect < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= p_dark < p_detect < 1, got {p_dark}, {p_detect}"
        )));
    }
    if p_dark == 0.0 {
        return Err(Error::NoFiniteOptimum);
    }
    Ok(())
}

/// Real-valued stationary point of `e_of_n` in `n`.
pub fn optimal_n_real(p_detect: f64, p_dark: f64) -> Result<f64> {
    check_pair(p_detect, p_dark)?;
    let a = (-p_dark).ln_1p();
    let b = (-p_detect).ln_1p();
    Ok(-(a / b).ln() / (a - b))
}

/// Integer repetition count maximizing `e_of_n`; compares the two integers around the stationary point.
pub fn optimal_n(p_detect: f64, p_dark: f64) -> Result<usize> {
    let x = optimal_n_real(p_detect, p_dark)?;
    let lo = (x.floor() as usize).max(1);
    let hi = (x.ceil() as usize).max(1);
    Ok(
        if e_of_n(hi, p_detect, p_dark) > e_of_n(lo, p_detect, p_dark) {
            hi
        } else {
            lo
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EofNFit {
    pub p_detect: f64,
    pub p_dark: f64,
    /// Weighted sum of squared residuals.
    pub residual: f64,
    pub se_detect: f64,
    pub se_dark: f64,
}

const EOFN_STARTS: [(f64, f64); 4] = [(0.5, 0.05), (0.2, 0.01), (0.8, 0.3), (0.05, 0.002)];

/// Weighted least squares of `e_of_n` over `(P(T|S), P(T|S̃))` on `[0,1]²`.
///
/// Points are `(n, e_measured, weight)`; weights are inverse variances, so the reported
/// standard errors come from `(JᵀWJ)⁻¹` without rescaling.
pub fn fit_e_of_n(data: &[(usize, f64, f64)]) -> Result<EofNFit> {
    let mut ns: Vec<usize> = data.iter().map(|d| d.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 {
        return Err(Error::Underdetermined(format!(
            "E(N) fit has two parameters but {} distinct n",
            ns.len()
        )));
    }
    if data
        .iter()
        .any(|d| d.0 == 0 || !(d.2 > 0.0) || !d.1.is_finite())
    {
        return Err(Error::InvalidInput(
            "E(N) points need n >= 1, finite e and positive weight".into(),
        ));
    }
    // p = sin²u keeps both probabilities in [0,1]
    let to_p = |u: f64| u.sin().powi(2);
    let to_u = |p: f64| p.sqrt().asin();
    let w_total: f64 = data.iter().map(|d| d.2).sum();
    let cost = |u: &[f64]| -> f64 {
        let (pd, pk) = (to_p(u[0]), to_p(u[1]));
        data.iter()
            .map(|&(n, e, w)| w * (e - e_of_n(n, pd, pk)).powi(2))
            .sum::<f64>()
            / w_total
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (pd, pk) in EOFN_STARTS {
        let (u, c) = nelder_mead(cost, &[to_u(pd), to_u(pk)], &[0.1, 0.05], 20_000, 1e-15)?;
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((u, c));
        }
    }
    let (u, cost_min) = best.ok_or(Error::FitDiverged("no start converged".into()))?;
    let residual = cost_min * w_total;
    let (p_detect, p_dark) = (to_p(u[0]), to_p(u[1]));

    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for &(n, _, w) in data {
        let nf = n as f64;
        let dd = nf * (1.0 - p_detect).powi(n as i32 - 1);
        let dk = -nf * (1.0 - p_dark).powi(n as i32 - 1);
        a += w * dd * dd;
        b += w * dd * dk;
        c += w * dk * dk;
    }
    let det = a * c - b * b;
    let (se_detect, se_dark) = if det > 0.0 {
        ((c / det).sqrt(), (a / det).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EofNFit {
        p_detect,
        p_dark,
        residual,
        se_detect,
        se_dark,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    /// Energy at `E = 0.5` (J).
    pub j_half: f64,
    /// Logistic slope per decade of energy.
    pub slope: f64,
    pub residual: f64,
}

/// Logistic in `log₁₀ J`, `E = 1/(1 + exp(−slope·(log₁₀J − log₁₀j_half)))`.
pub fn sigmoid(j: f64, j_half: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-slope * (j.log10() - j_half.log10())).exp())
}

/// Largest drop in `E` between energy-ordered neighbours that still counts as monotone.
pub const MONOTONE_TOLERANCE: f64 = 0.1;

/// Least-squares logistic fit of `(J, E)` points in log energy.
pub fn sensitivity_fit(data: &[(f64, f64)]) -> Result<SigmoidFit> {
    if data.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "sensitivity fit needs at least 4 points, got {}",
            data.len()
        )));
    }
    if data.iter().any(|d| !(d.0 > 0.0) || !d.1.is_finite()) {
        return Err(Error::InvalidInput(
            "energies must be positive and efficiencies finite".into(),
        ));
    }
    let mut pts = data.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // pooled curves repeat energies; compare the mean at each distinct J
    let mut means: Vec<(f64, f64, usize)> = Vec::new();
    for &(j, e) in &pts {
        match means.last_mut() {
            Some(m) if m.0 == j => {
                m.1 += e;
                m.2 += 1;
            }
            _ => means.push((j, e, 1)),
        }
    }
    let means: Vec<f64> = means.iter().map(|m| m.1 / m.2 as f64).collect();
    if means.windows(2).any(|w| w[1] < w[0] - MONOTONE_TOLERANCE) {
        return Err(Error::NotMonotone(format!(
            "E drops by more than {MONOTONE_TOLERANCE} between neighbouring energies"
        )));
    }
    let below = pts.iter().any(|p| p.1 < 0.5);
    let above = pts.iter().any(|p| p.1 > 0.5);
    if !(below && above) {
        return Err(Error::NoTransitionInData("E never crosses 0.5".into()));
    }
    // start from the first 0.5 crossing
    let k = pts.iter().position(|p| p.1 >= 0.5).unwrap_or(1).max(1);
    let (x0, y0, x1, y1) = (
        pts[k - 1].0.log10(),
        pts[k - 1].1,
        pts[k].0.log10(),
        pts[k].1,
    );
    let x_half = if y1 > y0 {
        x0 + (0.5 - y0) * (x1 - x0) / (y1 - y0)
    } else {
        0.5 * (x0 + x1)
    };
    let span = pts.last().unwrap().0.log10() - pts[0].0.log10();
    let slope0 = 8.0 / span.max(1e-3);
    let fit = least_squares(
        |p| {
            pts.iter()
                .map(|&(j, e)| 1.0 / (1.0 + (-p[1] * (j.log10() - p[0])).exp()) - e)
                .collect()
        },
        &[x_half, slope0],
    )?;
    let (x, slope) = (fit.params[0], fit.params[1]);
    if !(slope > 0.0) || x < pts[0].0.log10() || x > pts.last().unwrap().0.log10() {
        return Err(Error::NoTransitionInData(format!(
            "fitted midpoint 10^{x:.3} J with slope {slope:.3} is outside the data"
        )));
    }
    Ok(SigmoidFit {
        j_half: 10f64.powf(x),
        slope,
        residual: fit.ssr,
    })
}

/// Photons in a wavepacket of energy `j` at frequency `f_hz`.
pub fn photons_from_energy(j: f64, f_hz: f64) -> Result<f64> {
    if !(j >= 0.0) || !(f_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need j >= 0 and f > 0, got {j}, {f_hz}"
        )));
    }
    Ok(j / (H_PLANCK * f_hz))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(
            "linear fit needs two equal-length series of at least 2 points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared: if syy == 0.0 {
            1.0
        } else {
            sxy * sxy / (sxx * syy)
        },
    })
}

/// CSV `p_dark,p_detect`.
pub fn write_roc_csv<W: Write>(curve: &RocCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p_dark", "p_detect"]).map_err(csv_err)?;
    for p in &curve.points {
        w.write_record([p.p_dark.to_string(), p.p_detect.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of an E(N) table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EofNRow {
    pub n: usize,
    pub e_measured: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub e_fit: f64,
}

/// CSV `n,e_measured,ci_low,ci_high,e_fit`.
pub fn write_e_of_n_csv<W: Write>(rows: &[EofNRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "e_measured", "ci_low", "ci_high", "e_fit"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.e_measured.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.e_fit.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Binomial, Distribution};

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency(100, 100, 0, 100).unwrap().e, 1.0);
        assert_eq!(efficiency(37, 80, 37, 80).unwrap().e, 0.0);
        let s = efficiency(9800, 10_000, 0, 10_000).unwrap();
        assert!((s.e - 0.98).abs() < 1e-12);
        assert!(s.ci_low < 0.98 && s.ci_high > 0.98);
        assert!(efficiency(0, 0, 0, 1).is_err());
    }

    #[test]
    fn wilson_matches_hand_value() {
        // k = 5, n = 20 at z = 1.96: centre (0.25 + 0.09604)/1.19208, half 1.96/1.19208·√(0.009375 + 0.0024010)
        let (lo, hi) = wilson_interval(5, 20, 1.96);
        let centre = (0.25 + 1.96f64.powi(2) / 40.0) / (1.0 + 1.96f64.powi(2) / 20.0);
        let half = 1.96 / (1.0 + 1.96f64.powi(2) / 20.0)
            * (0.25 * 0.75 / 20.0 + 1.96f64.powi(2) / 1600.0).sqrt();
        assert!((lo - (centre - half)).abs() < 1e-15 && (hi - (centre + half)).abs() < 1e-15);
        assert!((lo - 0.1119).abs() < 1e-4 && (hi - 0.4687).abs() < 1e-4);
        assert_eq!(wilson_interval(0, 10, 1.96).0, 0.0);
    }

    #[test]
    fn dcr_examples() {
        let r = dcr(&[120e-6; 13], 10_000, 120e-6).unwrap();
        assert!((r.rate_hz - 10.833_333).abs() < 1e-5);
        let z = dcr(&[], 10_000, 120e-6).unwrap();
        assert_eq!(z.rate_hz, 0.0);
        assert!((z.floor_hz - 1.0 / 1.2).abs() < 1e-12);
        let one = dcr(&[60e-6], 1, 120e-6).unwrap();
        assert!((one.rate_hz - 2.0 / 120e-6).abs() < 1e-6);
        assert!(dcr(&[130e-6], 10, 120e-6).is_err());
    }

    fn stat(p_dark: f64, p_detect: f64) -> DetectionStats {
        DetectionStats {
            p_detect,
            p_dark,
            e: p_detect - p_dark,
            ci_low: 0.0,
            ci_high: 0.0,
            n_shots_s: 1,
            n_shots_ns: 1,
        }
    }

    #[test]
    fn roc_examples() {
        let diag: Vec<_> = (0..=10)
            .map(|k| stat(k as f64 / 10.0, k as f64 / 10.0))
            .collect();
        assert!((roc(&diag).unwrap().auc - 0.5).abs() < 1e-12);
        assert_eq!(roc(&[stat(0.0, 1.0)]).unwrap().auc, 1.0);
        let sweep: Vec<_> = (0..=100)
            .map(|k| k as f64 / 100.0)
            .map(|x| stat(x, (2.0 * x).min(1.0)))
            .collect();
        assert!((roc(&sweep).unwrap().auc - 0.75).abs() < 1e-12);
        assert!(roc(&[]).is_err());
    }

    #[test]
    fn e_of_n_examples() {
        assert!((e_of_n(1, 0.3, 0.05) - 0.25).abs() < 1e-15);
        assert_eq!(e_of_n(7, 1.0, 0.0), 1.0);
        let by_hand = 0.598_736_939_238_378_1 - 0.028_247_524_9;
        assert!((e_of_n(10, 0.3, 0.05) - by_hand).abs() < 1e-12);
        assert!((e_of_n(10, 0.3, 0.05) - 0.5704).abs() < 1e-4);
    }

    fn brute_force(pd: f64, pk: f64, n_max: usize) -> usize {
        // first maximum wins ties
        let mut best = (1, f64::NEG_INFINITY);
        for n in 1..=n_max {
            let e = e_of_n(n, pd, pk);
            if e > best.1 {
                best = (n, e);
            }
        }
        best.0
    }

    #[test]
    fn optimal_n_examples() {
        assert_eq!(optimal_n(0.3, 0.05).unwrap(), brute_force(0.3, 0.05, 1000));
        assert!(matches!(optimal_n(0.3, 0.0), Err(Error::NoFiniteOptimum)));
        let mut prev = 0.0;
        for pk in [1e-2, 1e-3, 1e-4, 1e-5] {
            let n = optimal_n_real(0.3, pk).unwrap();
            assert!(n > prev);
            prev = n;
        }
        assert!(optimal_n(0.05, 0.3).is_err());
    }

    #[test]
    fn optimal_n_linear_in_log_ratio() {
        let pd = 0.2;
        let eps: Vec<f64> = (0..25).map(|k| 10f64.powf(0.2 * k as f64 + 0.3)).collect();
        let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let y: Vec<f64> = eps
            .iter()
            .map(|e| optimal_n_real(pd, pd / e).unwrap())
            .collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!(fit.r_squared > 0.99, "{}", fit.r_squared);
        assert!(fit.slope > 0.0);
    }

    #[test]
    fn fit_e_of_n_noise_free_round_trip() {
        let data: Vec<_> = (1..=20).map(|n| (n, e_of_n(n, 0.4, 0.1), 1.0)).collect();
        let f = fit_e_of_n(&data).unwrap();
        assert!(
            (f.p_detect - 0.4).abs() < 1e-4 && (f.p_dark - 0.1).abs() < 1e-4,
            "{f:?}"
        );
        assert!(f.residual < 1e-10);
        assert!(matches!(
            fit_e_of_n(&[(1, 0.3, 1.0), (1, 0.31, 1.0)]),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn fit_e_of_n_interval_coverage() {
        let (pd, pk, shots): (f64, f64, u64) = (0.4, 0.1, 1000);
        let ns = [1usize, 2, 3, 5, 8, 13, 20];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (mut cover_d, mut cover_k) = (0, 0);
        for _ in 0..100 {
            let data: Vec<_> = ns
                .iter()
                .map(|&n| {
                    let (qs, qn) = (
                        1.0 - (1.0 - pd).powi(n as i32),
                        1.0 - (1.0 - pk).powi(n as i32),
                    );
                    let ks =
                        Binomial::new(shots, qs).unwrap().sample(&mut rng) as f64 / shots as f64;
                    let kn =
                        Binomial::new(shots, qn).unwrap().sample(&mut rng) as f64 / shots as f64;
                    let var = (qs * (1.0 - qs) + qn * (1.0 - qn)) / shots as f64;
                    (n, ks - kn, 1.0 / var)
                })
                .collect();
            let f = fit_e_of_n(&data).unwrap();
            cover_d += usize::from((f.p_detect - pd).abs() <= Z95 * f.se_detect);
            cover_k += usize::from((f.p_dark - pk).abs() <= Z95 * f.se_dark);
        }
        assert!(cover_d >= 90 && cover_k >= 90, "{cover_d} {cover_k}");
    }

    #[test]
    fn sensitivity_round_trip() {
        let j_half = 3.9e-21;
        let data: Vec<_> = (0..16)
            .map(|k| 10f64.powf(-22.0 + 0.15 * k as f64))
            .map(|j| (j, sigmoid(j, j_half, 3.0)))
            .collect();
        let f = sensitivity_fit(&data).unwrap();
        assert!((f.j_half / j_half - 1.0).abs() < 0.02, "{f:?}");
        assert!((f.slope - 3.0).abs() < 1e-6);
    }

    #[test]
    fn sensitivity_rejects_bad_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let js: Vec<f64> = (0..12)
            .map(|k| 10f64.powf(-22.0 + 0.2 * k as f64))
            .collect();
        let mut es: Vec<f64> = js.iter().map(|&j| sigmoid(j, 3.9e-21, 4.0)).collect();
        for k in (1..es.len()).rev() {
            es.swap(k, rng.random_range(0..=k));
        }
        let shuffled: Vec<_> = js.iter().copied().zip(es).collect();
        assert!(matches!(
            sensitivity_fit(&shuffled),
            Err(Error::NotMonotone(_))
        ));
        let flat: Vec<_> = js.iter().map(|&j| (j, 0.1)).collect();
        assert!(matches!(
            sensitivity_fit(&flat),
            Err(Error::NoTransitionInData(_))
        ));
        assert!(sensitivity_fit(&flat[..3]).is_err());
    }

    #[test]
    fn pooled_curves_with_shared_energies_are_accepted() {
        let js: Vec<f64> = (0..10)
            .map(|k| 10f64.powf(-21.5 + 0.2 * k as f64))
            .collect();
        // two curves offset by ±0.08 around the same sigmoid
        let data: Vec<_> = [0.08, -0.08]
            .iter()
            .flat_map(|&d| {
                js.iter()
                    .map(move |&j| (j, (sigmoid(j, 3.9e-21, 4.0) + d).clamp(0.0, 1.0)))
            })
            .collect();
        let f = sensitivity_fit(&data).unwrap();
        assert!((f.j_half / 3.9e-21 - 1.0).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn ratio_five_point_three_admits_thirteen_pulses() {
        let hits: Vec<f64> = (1..400)
            .map(|k| 1e-4 * k as f64)
            .filter(|&pk| optimal_n(5.3 * pk, pk).unwrap() == 13)
            .collect();
        assert!(!hits.is_empty());
        assert!(hits.iter().all(|&pk| (0.02..0.035).contains(&pk)), "{hits:?}");
    }

    #[test]
    fn photon_examples() {
        let n = photons_from_energy(3.9e-21, 7.742e9).unwrap();
        assert!((n - 760.0).abs() < 5.0, "{n}");
        assert_eq!(photons_from_energy(0.0, 7.742e9).unwrap(), 0.0);
        let m = photons_from_energy(0.21e-21, 7.742e9).unwrap();
        assert!((m - 41.0).abs() < 1.0, "{m}");
        assert!(photons_from_energy(-1.0, 1.0).is_err());
    }

    #[test]
    fn csv_exports() {
        let curve = roc(&[stat(0.1, 0.5)]).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&curve, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "p_dark,p_detect\n0.1,0.5\n"
        );
        let json = serde_json::to_value(efficiency(5, 10, 1, 10).unwrap()).unwrap();
        for key in [
            "p_detect",
            "p_dark",
            "e",
            "ci_low",
            "ci_high",
            "n_shots_s",
            "n_shots_ns",
        ] {
            assert!(json.get(key).is_some());
        }
    }

    proptest! {
        #[test]
        fn e_of_n_identity_and_bounds(pd in 0.0f64..1.0, pk in 0.0f64..1.0, n in 1usize..200) {
            prop_assert!((e_of_n(1, pd, pk) - (pd - pk)).abs() < 1e-15);
            let e = e_of_n(n, pd, pk);
            prop_assert!((-1.0..=1.0).contains(&e));
            if pd > pk {
                prop_assert!(e > 0.0);
            }
        }

        #[test]
        fn dcr_reduces_without_latch_loss(n in 0usize..50, shots in 50usize..10_000, tau in 1e-6f64..1e-3) {
            let r = dcr(&vec![tau; n], shots, tau).unwrap();
            prop_assert!((r.rate_hz - n as f64 / (shots as f64 * tau)).abs() <= 1e-12 * r.rate_hz.max(1.0));
        }

        #[test]
        fn efficiency_bounds(s in 0usize..100, ns in 0usize..100, extra_s in 0usize..100, extra_ns in 0usize..100) {
            let d = efficiency(s, s + extra_s + 1, ns, ns + extra_ns + 1).unwrap();
            prop_assert!(d.ci_low <= d.e && d.e <= d.ci_high);
            prop_assert!((-1.0..=1.0).contains(&d.e));
        }
    }

    #[test]
    fn optimal_n_matches_brute_force_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..1000 {
            let pd = rng.random_range(0.01..0.99);
            let pk = pd * rng.random_range(0.002..0.95);
            if optimal_n_real(pd, pk).unwrap() > 9_000.0 {
                continue;
            }
            assert_eq!(
                optimal_n(pd, pk).unwrap(),
                brute_force(pd, pk, 10_000),
                "{pd} {pk}"
            );
        }
    }

    #[test]
    fn bernoulli_repetitions_follow_the_law() {
        let (pd, pk, trials): (f64, f64, usize) = (0.3, 0.05, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [1usize, 5, 13, 20] {
            let hit = |p: f64, rng: &mut ChaCha8Rng| (0..n).any(|_| rng.random::<f64>() < p);
            let s = (0..trials).filter(|_| hit(pd, &mut rng)).count() as f64 / trials as f64;
            let d = (0..trials).filter(|_| hit(pk, &mut rng)).count() as f64 / trials as f64;
            let (qs, qd) = (
                1.0 - (1.0 - pd).powi(n as i32),
                1.0 - (1.0 - pk).powi(n as i32),
            );
            let sigma = ((qs * (1.0 - qs) + qd * (1.0 - qd)) / trials as f64).sqrt();
            assert!(
                ((s - d) - e_of_n(n, pd, pk)).abs() < 3.0 * sigma.max(1e-3),
                "n = {n}"
            );
        }
    }
}
