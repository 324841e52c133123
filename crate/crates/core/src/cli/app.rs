//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::commands::{self, Outcome};
use super::config::{ExperimentConfig, SweepCommand};
use super::{sha256_hex, CliError, CliResult, OutputDir, Provenance};

#[derive(Debug, Parser)]
#[command(
    name = "kipo",
    version,
    about = "Parametric-oscillator click-detector simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Omit generation timestamps so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timestamps: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold power against pump detuning for each configured Q_i.
    ThresholdMap(RunArgs),
    /// Paired stimulus/control ensembles.
    Shots(RunArgs),
    /// CPMG-N ensembles and the E(N) fit.
    Cpmg(RunArgs),
    /// One command repeated over values of a config key.
    Sweep(RunArgs),
    /// Fit a reflection spectrum CSV (freq_hz,re_s11,im_s11).
    S11Fit {
        input: PathBuf,
        /// Spectrum to divide out point by point.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn hash_files(paths: &[&Path]) -> CliResult<String> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(
            std::fs::read(p)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", p.display())))?,
        );
    }
    Ok(sha256_hex(&bytes))
}

fn report(out: &OutputDir, outcome: &Outcome) {
    for p in out.written() {
        println!("wrote {}", p.display());
    }
    for (k, v) in &outcome.headline {
        println!("{k} = {v}");
    }
}

fn run_config(kind: SweepCommand, args: &RunArgs, sweep: bool, timestamps: bool) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut out = OutputDir::create(
        &dir,
        Provenance::new(cfg.hash(), Some(cfg.seed), timestamps),
    )?;
    let outcome = if sweep {
        commands::sweep(&cfg, &mut out)?
    } else {
        commands::run(kind, &cfg, &mut out)?
    };
    report(&out, &outcome);
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let timestamps = !cli.no_timestamps;
    match &cli.command {
        Command::ThresholdMap(a) => run_config(SweepCommand::ThresholdMap, a, false, timestamps),
        Command::Shots(a) => run_config(SweepCommand::Shots, a, false, timestamps),
        Command::Cpmg(a) => run_config(SweepCommand::Cpmg, a, false, timestamps),
        Command::Sweep(a) => run_config(SweepCommand::Shots, a, true, timestamps),
        Command::S11Fit {
            input,
            baseline,
            out,
        } => {
            let mut files = vec![input.as_path()];
            files.extend(baseline.as_deref());
            let mut dir =
                OutputDir::create(out, Provenance::new(hash_files(&files)?, None, timestamps))?;
            let fit = commands::s11_fit(input, baseline.as_deref(), &mut dir)?;
            report(&dir, &Outcome::default());
            println!(
                "f0_hz = {}\nq_i = {}\nq_c = {}",
                fit.f0_hz, fit.q_i, fit.q_c
            );
            Ok(())
        }
    }
}

/// Parses, runs on a pool of `--workers` threads and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
