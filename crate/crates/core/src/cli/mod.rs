// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end: argument parsing, configuration precedence,
//! subcommand dispatch and exit codes.

mod commands;
mod config;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_detect, cmd_evaluate, cmd_experiment, cmd_train, cmd_verify, evaluate_traces, f1_csv,
    inversion_check, load_dataset, lr_check, power_passes, rejection_study, score_series,
    square_probe, train_encoder, Dataset, DetectReport, Experiment, ExperimentReport,
    InversionReport, LrReport, MarginResult, OutputDir, TrainReport, VerifyReport, CHECKPOINT_FILE,
    TEST_TRACE_FILE, VAL_TRACE_FILE,
};
pub use config::{DataSource, Generator, ModelFamily, RunConfig};

use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_ROOT_ENV: &str = "SNCPD_OUT_ROOT";
/// Output directory when neither flags, config nor environment name one.
pub const DEFAULT_OUT: &str = "sncpd-out";

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;
pub const EXIT_VERIFY_FAILED: i32 = 6;
pub const EXIT_CONTRACT: i32 = 7;

/// Exit code for an error category.
pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        "usage" => EXIT_USAGE,
        "io" => EXIT_IO,
        "data" => EXIT_DATA,
        "numeric" => EXIT_NUMERIC,
        _ => EXIT_CONTRACT,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sncpd",
    version,
    about = "Change point detection with spectrally normalized encoders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: $SNCPD_OUT_ROOT, else ./sncpd-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Detection margin; repeat for several.
    #[arg(long = "margin", global = true)]
    pub margins: Vec<usize>,
    /// `cos` or `mmd`.
    #[arg(long, global = true)]
    pub statistic: Option<String>,
    /// Window width w.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Spectral-norm cap c.
    #[arg(long = "cap-c", global = true)]
    pub cap_c: Option<f64>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder; writes the checkpoint and loss curve.
    Train,
    /// Score validation and test segments; writes statistic traces.
    Detect {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Tune thresholds on validation and report test F1 per margin.
    Evaluate {
        /// Directory holding the traces [default: the output directory].
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Certify and check a checkpoint; exits with 6 when a check fails.
    Verify {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Representation dynamics or Mahalanobis rejection curve.
    Experiment {
        /// `dynamics` or `rejection`.
        which: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Detect { .. } => "detect",
            Command::Evaluate { .. } => "evaluate",
            Command::Verify { .. } => "verify",
            Command::Experiment { .. } => "experiment",
        }
    }
}

impl Cli {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if !self.margins.is_empty() {
            cfg.margins = self.margins.clone();
        }
        if let Some(s) = &self.statistic {
            cfg.set("statistic", s)?;
        }
        if let Some(w) = self.window {
            cfg.window = w;
        }
        if let Some(c) = self.cap_c {
            cfg.cap_c = c;
        }
        Ok(cfg)
    }
}

/// Output directory: configured value, else the environment default.
pub fn resolve_out(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| {
            std::env::var_os(OUT_ROOT_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = cli.run_config()?;
    cfg.validate()?;
    let out = OutputDir::create(&resolve_out(&cfg), cli.command.name(), &cfg)?;
    match &cli.command {
        Command::Train => {
            let r = cmd_train(&cfg, &out)?;
            let last = r.outcome.history.last();
            println!(
                "trained {} steps (best epoch {}), final loss {:.6}, checkpoint {}",
                r.outcome.steps(),
                r.outcome.best_epoch.map_or("-".into(), |e| e.to_string()),
                last.map_or(f64::NAN, |l| l.loss),
                r.checkpoint.display()
            );
        }
        Command::Detect { checkpoint } => {
            let r = cmd_detect(&cfg, &out, checkpoint.as_deref())?;
            let alarms = r.test.alarms.iter().filter(|&&a| a).count();
            println!(
                "scored {} validation and {} test pairs; threshold {}, {alarms} test alarms",
                r.val.len(),
                r.test.len(),
                r.test.threshold
            );
        }
        Command::Evaluate { traces } => {
            let results = cmd_evaluate(&cfg, &out, traces.as_deref())?;
            println!("margin  threshold     precision  recall  f1");
            for r in &results {
                println!(
                    "{:<7} {:<13.6} {:<10.4} {:<7.4} {:.4}",
                    r.test.margin, r.threshold, r.test.precision, r.test.recall, r.test.f1
                );
            }
        }
        Command::Verify { checkpoint } => {
            let r = cmd_verify(&cfg, &out, checkpoint.as_deref())?;
            print!("{}", r.summary());
            if !r.passes() {
                return Ok(EXIT_VERIFY_FAILED);
            }
        }
        Command::Experiment { which, checkpoint } => {
            let which = Experiment::parse(which)?;
            match cmd_experiment(&cfg, &out, checkpoint.as_deref(), which)? {
                ExperimentReport::Dynamics(d) => println!(
                    "dynamics over {} change points ({} skipped): shared {:.6}, straddling {:.6}",
                    d.used,
                    d.skipped,
                    d.shared_mean(),
                    d.straddling_mean()
                ),
                ExperimentReport::Rejection { threshold, points } => println!(
                    "rejection curve with {} points at threshold {threshold}; F1 {:.4} -> {:.4}",
                    points.len(),
                    points.first().map_or(f64::NAN, |p| p.f1),
                    points.last().map_or(f64::NAN, |p| p.f1)
                ),
            }
        }
    }
    Ok(0)
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors go to stderr as `error[<category>]: <message>`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            exit_code(&e)
        }
    }
}
