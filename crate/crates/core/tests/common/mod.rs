#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const DEVICE: &str = r#"
[device]
f0_zero_ghz = 7.77564
i_star_ma = 21.5
q_c = 220e3
z_p_ohm = 33.0
alpha_p = 1.3
l_total_nh = 2.0
"#;

/// Detector bias used throughout: 2 mA, pump about 4 dB under the low-power threshold.
pub fn detector_config(pump_dbm: f64, extra: &str) -> String {
    format!("seed = 5\n{DEVICE}\n[operating]\ni_dc_ma = 2.0\npump_dbm = {pump_dbm}\n\n[integration]\ndt_ns = 10.0\ntls_feedback = true\ntls_tau_us = 50.0\n{extra}")
}

pub fn shots_section(n_shots: usize, p0_dbm: f64) -> String {
    format!("\n[shots]\nn_shots = {n_shots}\ntau0_us = 10.0\ntau1_us = 2.0\ntau2_us = 100.0\np0_dbm = {p0_dbm}\n")
}

pub fn kipo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kipo"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV written by the tool (provenance line and header skipped).
pub fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Every regular file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn s11_csv(f0: f64, q_i: f64, q_c: f64, n: usize, span_hz: f64) -> String {
    let mut s = String::from("freq_hz,re_s11,im_s11\n");
    for k in 0..n {
        let f = f0 - span_hz / 2.0 + span_hz * k as f64 / (n - 1) as f64;
        let x = 2.0 * (f - f0) / f0;
        let (a, b) = (1.0 / q_c - 1.0 / q_i, 1.0 / q_c + 1.0 / q_i);
        // (a − ix)/(b + ix)
        let d = b * b + x * x;
        let re = (a * b - x * x) / d;
        let im = (-x * b - a * x) / d;
        s += &format!("{f},{re},{im}\n");
    }
    s
}
