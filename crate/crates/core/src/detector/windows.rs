// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::diffcore::Tensor;
use crate::encoders::{time_slice, EncoderModel};
use crate::error::{Error, Result};
use crate::statistics::{cosine_distance, median_heuristic, mmd_biased, KernelConfig};

/// Adjacent past/future windows around split index `index`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub index: usize,
    /// `X[index - w .. index]`.
    pub past: Tensor,
    /// `X[index .. index + w]`.
    pub future: Tensor,
}

impl WindowPair {
    pub fn width(&self) -> usize {
        self.past.shape()[0]
    }

    /// The whole `2w` interval.
    pub fn interval(&self) -> Result<Tensor> {
        let data = [self.past.data(), self.future.data()].concat();
        Tensor::new(vec![2 * self.width(), self.past.shape()[1]], data)
    }
}

/// Split points `w, w + stride, …` up to `t - w`, each with its two windows.
pub fn make_window_pairs(x: &Tensor, w: usize, stride: usize) -> Result<Vec<WindowPair>> {
    if x.ndim() != 2 {
        return Err(Error::dim(format!(
            "series must be (t, D), got {:?}",
            x.shape()
        )));
    }
    if w == 0 || stride == 0 {
        return Err(Error::contract("window width and stride must be >= 1"));
    }
    let t = x.shape()[0];
    if t < 2 * w {
        return Err(Error::contract(format!(
            "series of length {t} is shorter than 2w = {}",
            2 * w
        )));
    }
    (w..=t - w)
        .step_by(stride)
        .map(|i| {
            Ok(WindowPair {
                index: i,
                past: time_slice(x, i - w, w)?,
                future: time_slice(x, i, w)?,
            })
        })
        .collect()
}

/// Test statistic compared across the two windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    /// Cosine distance between window embeddings.
    Cosine,
    /// Biased squared MMD between the two sequences of timestamp embeddings.
    Mmd,
}

/// Shape of the encoder output used for scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingMode {
    /// One `d`-vector per window.
    Vector,
    /// One `d`-vector per timestamp.
    Sequence,
}

impl Statistic {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cos" | "cosine" => Ok(Statistic::Cosine),
            "mmd" => Ok(Statistic::Mmd),
            other => Err(Error::config(format!(
                "unknown statistic '{other}' (cos|mmd)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Cosine => "cos",
            Statistic::Mmd => "mmd",
        }
    }

    pub fn required_mode(self) -> EmbeddingMode {
        match self {
            Statistic::Cosine => EmbeddingMode::Vector,
            Statistic::Mmd => EmbeddingMode::Sequence,
        }
    }
}

/// Statistic values per split index, with a threshold and the resulting alarms.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionTrace {
    pub indices: Vec<usize>,
    pub statistics: Vec<f64>,
    pub threshold: f64,
    pub alarms: Vec<bool>,
}

impl DetectionTrace {
    /// Trace with threshold `+∞` (no alarms).
    pub fn new(indices: Vec<usize>, statistics: Vec<f64>) -> Result<Self> {
        if indices.len() != statistics.len() {
            return Err(Error::dim("trace indices and statistics differ in length"));
        }
        let alarms = vec![false; indices.len()];
        Ok(Self {
            indices,
            statistics,
            threshold: f64::INFINITY,
            alarms,
        })
    }

    /// Sets `δ` and recomputes `alarm[i] = statistic[i] > δ`.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.set_threshold(threshold);
        self
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold;
        self.alarms = self.statistics.iter().map(|&s| s > threshold).collect();
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `split_index,statistic,alarm` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split_index,statistic,alarm\n");
        for ((i, s), a) in self.indices.iter().zip(&self.statistics).zip(&self.alarms) {
            out.push_str(&format!("{i},{s},{}\n", u8::from(*a)));
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. The threshold is not stored in
    /// the CSV and comes back as `+∞` unless `threshold` is given.
    pub fn from_csv(text: &str, threshold: Option<f64>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut indices = Vec::new();
        let mut stats = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let bad = |m: &str| Error::Parse {
                line,
                message: m.to_string(),
            };
            indices.push(
                rec.get(0)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad split_index"))?,
            );
            stats.push(
                rec.get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad statistic"))?,
            );
        }
        let trace = Self::new(indices, stats)?;
        Ok(match threshold {
            Some(t) => trace.with_threshold(t),
            None => trace,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

const ENCODE_BATCH: usize = 32;

/// Embeds many equally shaped windows, in parallel over fixed-size batches.
/// Vector mode yields `(d,)` tensors, sequence mode `(w, d)` tensors.
pub fn embed_windows(
    encoder: &EncoderModel,
    windows: &[&Tensor],
    mode: EmbeddingMode,
) -> Result<Vec<Tensor>> {
    let batches: Vec<Result<Vec<Tensor>>> = windows
        .par_chunks(ENCODE_BATCH)
        .map(|chunk| {
            let x = Tensor::stack(chunk)?;
            let y = match mode {
                EmbeddingMode::Vector => encoder.encode_vector(&x)?,
                EmbeddingMode::Sequence => encoder.encode_sequence(&x)?,
            };
            let per = y.numel() / chunk.len();
            let shape = y.shape()[1..].to_vec();
            y.data()
                .chunks_exact(per)
                .map(|c| Tensor::new(shape.clone(), c.to_vec()))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(windows.len());
    for b in batches {
        out.extend(b?);
    }
    Ok(out)
}

/// How window pairs are turned into statistic values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreConfig {
    pub statistic: Statistic,
    pub mode: EmbeddingMode,
    /// RBF bandwidth for MMD; the median heuristic over the embedded
    /// timestamps of the first pairs is used when absent.
    pub sigma: Option<f64>,
}

impl ScoreConfig {
    pub fn new(statistic: Statistic) -> Self {
        Self {
            statistic,
            mode: statistic.required_mode(),
            sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.statistic.required_mode() != self.mode {
            return Err(Error::config(format!(
                "statistic '{}' needs {:?} embeddings, encoder produces {:?}",
                self.statistic.name(),
                self.statistic.required_mode(),
                self.mode
            )));
        }
        Ok(())
    }
}

/// Points used to calibrate the MMD bandwidth.
const CALIBRATION_POINTS: usize = 256;

/// Computes one statistic value per pair. Windows shared between pairs (the
/// future window of one split is the past window of a later one) are
/// embedded once.
pub fn score_pairs(
    pairs: &[WindowPair],
    encoder: &EncoderModel,
    cfg: &ScoreConfig,
) -> Result<DetectionTrace> {
    cfg.validate()?;
    if pairs.is_empty() {
        return DetectionTrace::new(Vec::new(), Vec::new());
    }
    let w = pairs[0].width();
    let mut windows: BTreeMap<usize, &Tensor> = BTreeMap::new();
    for p in pairs {
        if p.width() != w {
            return Err(Error::dim("window pairs have different widths"));
        }
        windows.insert(p.index - w, &p.past);
        windows.insert(p.index, &p.future);
    }
    let starts: Vec<usize> = windows.keys().copied().collect();
    let refs: Vec<&Tensor> = windows.values().copied().collect();
    let emb = embed_windows(encoder, &refs, cfg.mode)?;
    let lookup = |s: usize| &emb[starts.binary_search(&s).expect("window was embedded")];

    let stats: Vec<f64> = match cfg.statistic {
        Statistic::Cosine => pairs
            .iter()
            .map(|p| cosine_distance(lookup(p.index - w).data(), lookup(p.index).data()))
            .collect(),
        Statistic::Mmd => {
            let sigma = match cfg.sigma {
                Some(s) => s,
                None => {
                    let mut pts: Vec<&[f64]> = Vec::new();
                    'outer: for e in &emb {
                        for r in e.rows() {
                            pts.push(r);
                            if pts.len() == CALIBRATION_POINTS {
                                break 'outer;
                            }
                        }
                    }
                    median_heuristic(&pts)?
                }
            };
            let kernel = KernelConfig::rbf(sigma)?;
            pairs
                .par_iter()
                .map(|p| mmd_biased(lookup(p.index - w), lookup(p.index), &kernel))
                .collect::<Result<Vec<f64>>>()?
        }
    };
    DetectionTrace::new(pairs.iter().map(|p| p.index).collect(), stats)
}
