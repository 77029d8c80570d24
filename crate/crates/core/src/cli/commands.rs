// SPDX-License-Identifier: MIT OR Apache-2.0

//! The five subcommands. Each one validates its configuration, computes,
//! and writes CSV/SVG/text outputs with a manifest next to every file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::{hex, DataSource, Generator, RunConfig};
use super::plot::{Chart, Line};
use crate::data::{
    evenly_spaced_cps, gen_elliptical, load_csv, normalize_to_sphere, sliding_windows, split,
    EllipticalFamily, TimeSeries,
};
use crate::detector::{
    dynamics_experiment, interval_embeddings, make_window_pairs, margin_f1, mmd_power_experiment,
    rejection_csv, rejection_curve, score_pairs, threshold_sweep, DetectionTrace, DynamicsResult,
    F1Report, PowerConfig, PowerResult, RejectionPoint, ScoreConfig,
};
use crate::diffcore::Tensor;
use crate::encoders::{
    load_checkpoint, train, BYOLTrainer, Dense, EncoderConfig, EncoderModel, LossRecord,
    TS2VecTrainer, TrainOptions, TrainOutcome,
};
use crate::error::{Error, Result};
use crate::specnorm::{
    certify_bilipschitz, invert_hidden, sample_sphere_pairs, CertificationReport, SNConfig,
};
use crate::statistics::{lr_preservation_check, MatrixNormalParams};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const VAL_TRACE_FILE: &str = "trace_val.csv";
pub const TEST_TRACE_FILE: &str = "trace_test.csv";

// Independent random streams derived from the run seed.
const CERTIFY_STREAM: u64 = 0xc3e7;
const INVERT_STREAM: u64 = 0x1f4e;
const LR_STREAM: u64 = 0x7a11;
const POWER_STREAM: u64 = 0x90e4;

/// Output directory that writes a `<file>.manifest` beside every file.
pub struct OutputDir {
    pub root: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            command: command.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` and its manifest (command, config hash, seed, content
    /// hash). Nothing time-dependent is recorded.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        let manifest = format!(
            "file = {name}\ncommand = {}\nconfig_sha256 = {}\nseed = {}\ncontent_sha256 = {}\n",
            self.command,
            self.config_hash,
            self.seed,
            hex(&Sha256::digest(contents))
        );
        let mpath = self.path(&format!("{name}.manifest"));
        std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
        Ok(path)
    }
}

/// The series and its contiguous train/validation/test segments.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub full: TimeSeries,
    pub train: TimeSeries,
    pub val: TimeSeries,
    pub test: TimeSeries,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut full = match &cfg.data {
        DataSource::Csv(path) => load_csv(path)?,
        DataSource::Synthetic => {
            let family = match cfg.generator {
                Generator::Gaussian | Generator::GaussianScale => EllipticalFamily::Gaussian,
                Generator::StudentT => EllipticalFamily::StudentT { dof: cfg.dof },
            };
            let scale = match cfg.generator {
                Generator::Gaussian => 1.0,
                _ => cfg.scale_shift,
            };
            let cps = evenly_spaced_cps(cfg.length, cfg.n_cps);
            gen_elliptical(
                cfg.channels,
                cfg.length,
                &cps,
                family,
                cfg.delta,
                scale,
                cfg.seed,
            )?
        }
    };
    if cfg.normalize {
        let values = normalize_to_sphere(full.values());
        full = TimeSeries::new(full.name.clone(), values, full.labels().cloned())?;
    }
    let (train, val, test) = split(&full, &cfg.split)?;
    Ok(Dataset {
        full,
        train,
        val,
        test,
    })
}

/// Trains a fresh encoder of the configured family on the training segment,
/// selecting the epoch with the lowest validation loss.
pub fn train_encoder(cfg: &RunConfig, data: &Dataset) -> Result<(EncoderModel, TrainOutcome)> {
    let model = EncoderModel::new(cfg.encoder_config(data.full.channels())?, cfg.seed)?;
    let span = 2 * cfg.window;
    let train_w = sliding_windows(data.train.values(), span, cfg.train_stride)?;
    let val_w = if data.val.len() >= span {
        sliding_windows(data.val.values(), span, cfg.val_stride)?
    } else {
        Vec::new()
    };
    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        val_every: cfg.val_every,
        max_steps: None,
    };
    if cfg.model.byol() {
        let mut t = BYOLTrainer::new(
            model,
            cfg.byol_head_hidden,
            cfg.code_size,
            cfg.byol_beta,
            cfg.lr,
            cfg.seed,
        )?;
        let out = train(&mut t, &train_w, &val_w, &opts)?;
        Ok((t.online, out))
    } else {
        let mut t = TS2VecTrainer::new(model, cfg.lr);
        let out = train(&mut t, &train_w, &val_w, &opts)?;
        Ok((t.model, out))
    }
}

/// Statistic trace of one segment at the configured window and stride.
pub fn score_series(
    cfg: &RunConfig,
    encoder: &EncoderModel,
    series: &TimeSeries,
) -> Result<DetectionTrace> {
    let pairs = make_window_pairs(series.values(), cfg.window, cfg.stride)?;
    let mut sc = ScoreConfig::new(cfg.statistic);
    sc.mode = cfg.embedding_mode();
    score_pairs(&pairs, encoder, &sc)
}

/// Validation-tuned test quality at one margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginResult {
    pub threshold: f64,
    pub val_f1: f64,
    pub test: F1Report,
}

/// Tunes a threshold on the validation trace separately for each margin
/// and scores the test trace with it.
pub fn evaluate_traces(
    val: &DetectionTrace,
    val_cps: &[usize],
    test: &DetectionTrace,
    test_cps: &[usize],
    margins: &[usize],
) -> Result<Vec<MarginResult>> {
    margins
        .iter()
        .map(|&m| {
            let sweep = threshold_sweep(val, val_cps, m)?;
            let tuned = test.clone().with_threshold(sweep.threshold);
            Ok(MarginResult {
                threshold: sweep.threshold,
                val_f1: sweep.report.f1,
                test: margin_f1(&tuned, test_cps, m)?,
            })
        })
        .collect()
}

pub fn f1_csv(results: &[MarginResult]) -> String {
    let mut s = String::from(
        "margin,threshold,val_f1,precision,recall,f1,true_positives,false_positives,false_negatives,uncovered\n",
    );
    for r in results {
        let t = &r.test;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            t.margin,
            r.threshold,
            r.val_f1,
            t.precision,
            t.recall,
            t.f1,
            t.true_positives,
            t.false_positives,
            t.false_negatives,
            t.uncovered
        );
    }
    s
}

fn loss_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("step,loss,max_layer_norm\n");
    for r in history {
        let _ = writeln!(s, "{},{},{}", r.step, r.loss, r.max_layer_norm);
    }
    s
}

fn trace_svg(title: &str, trace: &DetectionTrace, cps: &[usize]) -> String {
    Chart {
        title,
        x_label: "split index",
        y_label: "statistic",
        lines: vec![Line {
            label: "statistic",
            points: trace
                .indices
                .iter()
                .zip(&trace.statistics)
                .map(|(&i, &s)| (i as f64, s))
                .collect(),
        }],
        hlines: if trace.threshold.is_finite() {
            vec![trace.threshold]
        } else {
            Vec::new()
        },
        vlines: cps.iter().map(|&c| c as f64).collect(),
    }
    .to_svg()
}

/// Result of `train`.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub outcome: TrainOutcome,
}

pub fn cmd_train(cfg: &RunConfig, out: &OutputDir) -> Result<TrainReport> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (model, outcome) = train_encoder(cfg, &data)?;
    let checkpoint = out.write(CHECKPOINT_FILE, &crate::encoders::encode_checkpoint(&model))?;
    out.write("loss.csv", loss_csv(&outcome.history).as_bytes())?;
    let chart = Chart {
        title: "training loss",
        x_label: "step",
        y_label: "loss",
        lines: vec![Line {
            label: cfg.model.name(),
            points: outcome
                .history
                .iter()
                .map(|r| (r.step as f64, r.loss))
                .collect(),
        }],
        ..Chart::default()
    };
    out.write("loss.svg", chart.to_svg().as_bytes())?;
    Ok(TrainReport {
        checkpoint,
        outcome,
    })
}

/// Loads the checkpoint (default `<out>/model.ckpt`) and checks its input
/// width against `channels` when given.
fn checkpoint_for(
    out: &OutputDir,
    checkpoint: Option<&Path>,
    channels: Option<usize>,
) -> Result<EncoderModel> {
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.path(CHECKPOINT_FILE));
    let model = load_checkpoint(&path)?;
    if let Some(c) = channels.filter(|&c| c != model.input_dim()) {
        return Err(Error::config(format!(
            "checkpoint expects {} channels, data has {c}",
            model.input_dim()
        )));
    }
    Ok(model)
}

/// Result of `detect`.
#[derive(Clone, Debug)]
pub struct DetectReport {
    pub val: DetectionTrace,
    pub test: DetectionTrace,
}

/// Scores the validation and test segments. Alarms use the threshold tuned
/// on validation at the first margin when validation labels exist.
pub fn cmd_detect(
    cfg: &RunConfig,
    out: &OutputDir,
    checkpoint: Option<&Path>,
) -> Result<DetectReport> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = checkpoint_for(out, checkpoint, Some(data.full.channels()))?;
    let mut val = score_series(cfg, &model, &data.val)?;
    let mut test = score_series(cfg, &model, &data.test)?;
    if !data.val.change_points().is_empty() {
        let sweep = threshold_sweep(&val, data.val.change_points(), cfg.margins[0])?;
        val.set_threshold(sweep.threshold);
        test.set_threshold(sweep.threshold);
    }
    out.write(VAL_TRACE_FILE, val.to_csv().as_bytes())?;
    out.write(TEST_TRACE_FILE, test.to_csv().as_bytes())?;
    out.write(
        "trace_test.svg",
        trace_svg("test trace", &test, data.test.change_points()).as_bytes(),
    )?;
    Ok(DetectReport { val, test })
}

fn read_trace(path: &Path) -> Result<DetectionTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DetectionTrace::from_csv(&text, None)
}

/// Reads the traces written by `detect` and reports test F1 per margin.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    out: &OutputDir,
    trace_dir: Option<&Path>,
) -> Result<Vec<MarginResult>> {
    cfg.validate()?;
    let dir = trace_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.root.clone());
    let val = read_trace(&dir.join(VAL_TRACE_FILE))?;
    let test = read_trace(&dir.join(TEST_TRACE_FILE))?;
    let data = load_dataset(cfg)?;
    if data.val.change_points().is_empty() {
        return Err(Error::Validation(
            "validation segment has no labeled change points".into(),
        ));
    }
    let results = evaluate_traces(
        &val,
        data.val.change_points(),
        &test,
        data.test.change_points(),
        &cfg.margins,
    )?;
    out.write("f1.csv", f1_csv(&results).as_bytes())?;
    Ok(results)
}

/// Round-trip accuracy of the fixed-point inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionReport {
    /// `(max abs error, iterations)` per input, up to the first failure.
    pub samples: Vec<(f64, usize)>,
    pub failure: Option<String>,
    pub tolerance: f64,
}

impl InversionReport {
    pub fn passes(&self) -> bool {
        self.failure.is_none() && self.samples.iter().all(|s| s.0 < self.tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,max_abs_error,iterations\n");
        for (k, (e, it)) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{k},{e},{it}");
        }
        s
    }
}

/// Inverts `h` on `n` random hidden sequences `g(X)` with `X ~ N(0, I)`.
pub fn inversion_check(
    model: &EncoderModel,
    n: usize,
    len: usize,
    sn: &SNConfig,
    seed: u64,
) -> InversionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InversionReport {
        samples: Vec::with_capacity(n),
        failure: None,
        tolerance: 1e-6,
    };
    for _ in 0..n {
        let x = Tensor::randn(&[1, len, model.input_dim()], 1.0, &mut rng);
        let step = || -> Result<(f64, usize)> {
            let z = model.input_projection(&x)?;
            let y = model.apply_hidden(&z)?;
            let (back, stats) = invert_hidden(model, &y, sn.invert_max_iter, sn.invert_tol)?;
            let err = z
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok((err, stats.iterations))
        };
        match step() {
            Ok(s) => report.samples.push(s),
            Err(e) => {
                report.failure = Some(e.to_string());
                break;
            }
        }
    }
    report
}

/// Log-LR comparison per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LrReport {
    /// `(raw, embedded)` log-LR values, up to the first failure.
    pub samples: Vec<(f64, f64)>,
    pub failure: Option<String>,
    pub tolerance: f64,
    /// Decisions are compared only where `|raw| > decision_margin`.
    pub decision_margin: f64,
}

impl LrReport {
    pub fn max_abs_diff(&self) -> f64 {
        self.samples
            .iter()
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Fraction of decisive samples where `log LR > 0` agrees.
    pub fn decision_agreement(&self) -> f64 {
        let decisive: Vec<_> = self
            .samples
            .iter()
            .filter(|(a, _)| a.abs() > self.decision_margin)
            .collect();
        let agree = decisive
            .iter()
            .filter(|(a, b)| (*a > 0.0) == (*b > 0.0))
            .count();
        if decisive.is_empty() {
            1.0
        } else {
            agree as f64 / decisive.len() as f64
        }
    }

    pub fn passes(&self) -> bool {
        self.failure.is_none()
            && !self.samples.is_empty()
            && self.max_abs_diff() < self.tolerance
            && self.decision_agreement() == 1.0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,raw_log_lr,embedded_log_lr,abs_diff\n");
        for (k, (a, b)) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{k},{a},{b},{}", (a - b).abs());
        }
        s
    }
}

/// Likelihood-ratio preservation through `model`, which must have a square
/// input map and no head. Samples alternate between the two hypotheses
/// `MN(0, I, I)` and `MN(μ, I, I)` with constant entries
/// `μ = delta / sqrt(D)`.
pub fn lr_check(
    model: &EncoderModel,
    len: usize,
    n: usize,
    delta: f64,
    sn: &SNConfig,
    seed: u64,
) -> LrReport {
    let d = model.input_dim();
    let pinf = MatrixNormalParams::isotropic(DMatrix::zeros(len, d));
    let p0 =
        MatrixNormalParams::isotropic(DMatrix::from_element(len, d, delta / (d as f64).sqrt()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LrReport {
        samples: Vec::with_capacity(n),
        failure: None,
        tolerance: 1e-4,
        decision_margin: 1e-3,
    };
    for k in 0..n {
        let shift = if k % 2 == 1 {
            delta / (d as f64).sqrt()
        } else {
            0.0
        };
        let x = Tensor::randn(&[len, d], 1.0, &mut rng).map(|v| v + shift);
        match lr_preservation_check(&x, model, &p0, &pinf, sn.invert_max_iter, sn.invert_tol) {
            Ok(r) => report.samples.push((r.raw_log_lr, r.embedded_log_lr)),
            Err(e) => {
                report.failure = Some(e.to_string());
                break;
            }
        }
    }
    report
}

/// The residual stack of `model` behind a random, well-conditioned square
/// input map and without head, for likelihood-ratio checks on a trained
/// encoder.
pub fn square_probe(model: &EncoderModel, seed: u64) -> EncoderModel {
    let h = model.hidden_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Tensor::randn(&[h, h], 0.1 / (h as f64).sqrt(), &mut rng);
    let weight = Tensor::eye(h).add(&noise).expect("same shape");
    EncoderModel {
        config: EncoderConfig {
            input_dim: h,
            output_dim: None,
            ..model.config.clone()
        },
        input: Dense {
            weight,
            bias: Tensor::randn(&[h], 0.1, &mut rng),
        },
        blocks: model.blocks.clone(),
        head: None,
    }
}

/// Acceptance rules of the power study.
pub fn power_passes(result: &PowerResult, slope_tolerance: f64) -> bool {
    let non_increasing = result
        .rows
        .windows(2)
        .all(|w| w[1].embedded_type2 <= w[0].embedded_type2);
    let (raw, emb) = result.log_log_slopes();
    let a = result.alpha;
    let ci = a + 1.96 * (a * (1.0 - a) / result.trials as f64).sqrt();
    let calibrated = result
        .rows
        .iter()
        .all(|r| r.raw_type1 <= ci && r.embedded_type1 <= ci);
    non_increasing && (raw - emb).abs() <= slope_tolerance && calibrated
}

/// Result of `verify`.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub certification: CertificationReport,
    pub inversion: InversionReport,
    pub lr: LrReport,
    pub power: PowerResult,
    pub power_pass: bool,
}

impl VerifyReport {
    /// `(name, passed)` for each report.
    pub fn verdicts(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("bi_lipschitz", self.certification.passes()),
            ("kernel", self.certification.kernel_passes()),
            ("inversion", self.inversion.passes()),
            ("likelihood_ratio", self.lr.passes()),
            ("mmd_power", self.power_pass),
        ]
    }

    pub fn passes(&self) -> bool {
        self.verdicts().iter().all(|v| v.1)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, ok) in self.verdicts() {
            let _ = writeln!(s, "{name} = {}", if ok { "PASS" } else { "FAIL" });
        }
        if let Some(f) = &self.inversion.failure {
            let _ = writeln!(s, "inversion_failure = {f}");
        }
        if let Some(f) = &self.lr.failure {
            let _ = writeln!(s, "likelihood_ratio_failure = {f}");
        }
        let _ = writeln!(
            s,
            "likelihood_ratio_max_abs_diff = {}",
            self.lr.max_abs_diff()
        );
        let (raw, emb) = self.power.log_log_slopes();
        let _ = writeln!(s, "power_slope_raw = {raw}\npower_slope_embedded = {emb}");
        s
    }
}

/// Bi-Lipschitz and kernel certification, inversion round trips,
/// likelihood-ratio preservation and the MMD power study on a checkpoint.
pub fn cmd_verify(
    cfg: &RunConfig,
    out: &OutputDir,
    checkpoint: Option<&Path>,
) -> Result<VerifyReport> {
    cfg.validate()?;
    cfg.validate_invertible()?;
    let model = checkpoint_for(out, checkpoint, None)?;
    let sn = model.sn_config().unwrap_or_default();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ CERTIFY_STREAM);
    let pairs = sample_sphere_pairs(
        cfg.verify_pairs,
        &[cfg.window, model.hidden_dim()],
        &mut rng,
    );
    let certification = certify_bilipschitz(&model, &pairs, cfg.cap_c, cfg.verify_iterations)?;
    out.write("certification.txt", certification.to_kv().as_bytes())?;

    let inversion = inversion_check(
        &model,
        cfg.verify_inversions,
        cfg.window,
        &sn,
        cfg.seed ^ INVERT_STREAM,
    );
    out.write("inversion.csv", inversion.to_csv().as_bytes())?;

    let probe = square_probe(&model, cfg.seed ^ LR_STREAM);
    let lr = lr_check(
        &probe,
        cfg.lr_length,
        cfg.lr_samples,
        cfg.lr_delta,
        &sn,
        cfg.seed ^ LR_STREAM,
    );
    out.write("likelihood_ratio.csv", lr.to_csv().as_bytes())?;

    let power = mmd_power_experiment(
        &model,
        &PowerConfig {
            sizes: cfg.power_sizes.clone(),
            trials: cfg.power_trials,
            alpha: cfg.power_alpha,
            delta: cfg.power_delta,
            seed: cfg.seed ^ POWER_STREAM,
        },
    )?;
    out.write("power.csv", power.to_csv().as_bytes())?;
    let power_pass = power_passes(&power, 0.3);

    let report = VerifyReport {
        certification,
        inversion,
        lr,
        power,
        power_pass,
    };
    out.write("verify.txt", report.summary().as_bytes())?;
    Ok(report)
}

/// Diagnostic experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Dynamics,
    Rejection,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dynamics" => Ok(Self::Dynamics),
            "rejection" => Ok(Self::Rejection),
            _ => Err(Error::config(format!(
                "unknown experiment '{s}' (expected dynamics or rejection)"
            ))),
        }
    }
}

/// Output of `experiment`.
#[derive(Clone, Debug)]
pub enum ExperimentReport {
    Dynamics(DynamicsResult),
    Rejection {
        threshold: f64,
        points: Vec<RejectionPoint>,
    },
}

/// Rejection curve on the test segment. The Gaussian is fitted to interval
/// embeddings of the training and validation segments; the threshold is the
/// test-set optimum at the first margin, frozen before any removal.
pub fn rejection_study(
    cfg: &RunConfig,
    model: &EncoderModel,
    data: &Dataset,
) -> Result<(f64, Vec<RejectionPoint>)> {
    let margin = cfg.margins[0];
    let mut fit = Vec::new();
    for seg in [&data.train, &data.val] {
        if seg.len() >= 2 * cfg.window {
            let pairs = make_window_pairs(seg.values(), cfg.window, cfg.stride)?;
            fit.extend(interval_embeddings(model, &pairs)?);
        }
    }
    let test_pairs = make_window_pairs(data.test.values(), cfg.window, cfg.stride)?;
    let test_emb = interval_embeddings(model, &test_pairs)?;
    let mut sc = ScoreConfig::new(cfg.statistic);
    sc.mode = cfg.embedding_mode();
    let trace = score_pairs(&test_pairs, model, &sc)?;
    let cps = data.test.change_points();
    let threshold = threshold_sweep(&trace, cps, margin)?.threshold;
    let points = rejection_curve(
        &fit,
        &test_emb,
        &trace.with_threshold(threshold),
        cps,
        margin,
    )?;
    Ok((threshold, points))
}

pub fn cmd_experiment(
    cfg: &RunConfig,
    out: &OutputDir,
    checkpoint: Option<&Path>,
    which: Experiment,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = checkpoint_for(out, checkpoint, Some(data.full.channels()))?;
    match which {
        Experiment::Dynamics => {
            let r = dynamics_experiment(&model, &data.full, cfg.window, cfg.dynamics_segment)?;
            out.write("dynamics.csv", r.to_csv().as_bytes())?;
            let chart = Chart {
                title: "similarity to the unchanged sequence",
                x_label: "window start",
                y_label: "cosine similarity",
                lines: vec![Line {
                    label: "mean over change points",
                    points: r
                        .similarity
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| (i as f64, v))
                        .collect(),
                }],
                vlines: vec![
                    (r.segment / 2) as f64 - r.window as f64,
                    (r.segment / 2) as f64,
                ],
                ..Chart::default()
            };
            out.write("dynamics.svg", chart.to_svg().as_bytes())?;
            Ok(ExperimentReport::Dynamics(r))
        }
        Experiment::Rejection => {
            let (threshold, points) = rejection_study(cfg, &model, &data)?;
            out.write("rejection.csv", rejection_csv(&points).as_bytes())?;
            let chart = Chart {
                title: "F1 after Mahalanobis rejection",
                x_label: "fraction kept",
                y_label: "F1",
                lines: vec![Line {
                    label: "test F1",
                    points: points.iter().map(|p| (p.fraction_kept, p.f1)).collect(),
                }],
                ..Chart::default()
            };
            out.write("rejection.svg", chart.to_svg().as_bytes())?;
            Ok(ExperimentReport::Rejection { threshold, points })
        }
    }
}
