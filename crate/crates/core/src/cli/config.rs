// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::SplitSpec;
use crate::detector::{EmbeddingMode, Statistic};
use crate::encoders::{byol_backbone_config, Activation, EncoderConfig};
use crate::error::{Error, Result};
use crate::specnorm::SNConfig;

/// Encoder family and training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFamily {
    SnTs2Vec,
    Ts2Vec,
    SnByol,
    TsByol,
}

impl ModelFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sn-ts2vec" => Ok(Self::SnTs2Vec),
            "ts2vec" => Ok(Self::Ts2Vec),
            "sn-byol" => Ok(Self::SnByol),
            "ts-byol" => Ok(Self::TsByol),
            _ => Err(Error::config(format!(
                "unknown model '{s}' (expected sn-ts2vec, ts2vec, sn-byol or ts-byol)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SnTs2Vec => "sn-ts2vec",
            Self::Ts2Vec => "ts2vec",
            Self::SnByol => "sn-byol",
            Self::TsByol => "ts-byol",
        }
    }

    pub fn spectral(self) -> bool {
        matches!(self, Self::SnTs2Vec | Self::SnByol)
    }

    pub fn byol(self) -> bool {
        matches!(self, Self::SnByol | Self::TsByol)
    }
}

/// Synthetic observation law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator {
    /// Unit-variance Gaussian with mean shifts.
    Gaussian,
    /// Gaussian with mean shifts and alternating scale.
    GaussianScale,
    /// Unit-variance Student-t with mean shifts and alternating scale.
    StudentT,
}

impl Generator {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "gaussian-scale" => Ok(Self::GaussianScale),
            "student-t" => Ok(Self::StudentT),
            _ => Err(Error::config(format!(
                "unknown generator '{s}' (expected gaussian, gaussian-scale or student-t)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::GaussianScale => "gaussian-scale",
            Self::StudentT => "student-t",
        }
    }
}

/// Where observations come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic,
    Csv(PathBuf),
}

/// Every setting of a run. Keys of the text format match the field names.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub generator: Generator,
    pub channels: usize,
    pub length: usize,
    pub n_cps: usize,
    pub delta: f64,
    pub scale_shift: f64,
    pub dof: f64,
    pub normalize: bool,
    pub split: SplitSpec,

    pub model: ModelFamily,
    /// `None` follows the statistic.
    pub embedding: Option<EmbeddingMode>,
    pub window: usize,
    pub stride: usize,
    pub train_stride: usize,
    pub val_stride: usize,
    pub code_size: usize,
    pub hidden: usize,
    pub depth: usize,
    pub kernel_width: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub cap_c: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_every: usize,
    pub byol_beta: f64,
    pub byol_head_hidden: usize,

    pub statistic: Statistic,
    pub margins: Vec<usize>,

    pub verify_pairs: usize,
    pub verify_iterations: usize,
    pub verify_inversions: usize,
    pub lr_length: usize,
    pub lr_samples: usize,
    pub lr_delta: f64,
    pub power_sizes: Vec<usize>,
    pub power_trials: usize,
    pub power_alpha: f64,
    pub power_delta: f64,
    pub dynamics_segment: usize,

    pub seed: u64,
    /// Output directory; excluded from the configuration hash.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic,
            generator: Generator::Gaussian,
            channels: 5,
            length: 5000,
            n_cps: 10,
            delta: 1.5,
            scale_shift: 1.0,
            dof: 5.0,
            normalize: false,
            split: SplitSpec::default(),
            model: ModelFamily::SnTs2Vec,
            embedding: None,
            window: 50,
            stride: 1,
            train_stride: 2,
            val_stride: 10,
            code_size: 16,
            hidden: 32,
            depth: 8,
            kernel_width: 3,
            activation: Activation::Tanh,
            dropout: 0.1,
            cap_c: 0.9,
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            val_every: 1,
            byol_beta: 0.99,
            byol_head_hidden: 64,
            statistic: Statistic::Cosine,
            margins: vec![50],
            verify_pairs: 1000,
            verify_iterations: 50,
            verify_inversions: 100,
            lr_length: 8,
            lr_samples: 100,
            lr_delta: 1.0,
            power_sizes: vec![25, 50, 100, 200],
            power_trials: 200,
            power_alpha: 0.05,
            power_delta: 1.0,
            dynamics_segment: 300,
            seed: 0,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value '{value}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn embedding_name(mode: Option<EmbeddingMode>) -> &'static str {
    match mode {
        None => "auto",
        Some(EmbeddingMode::Vector) => "vector",
        Some(EmbeddingMode::Sequence) => "sequence",
    }
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "data" => {
                self.data = if v == "synthetic" {
                    DataSource::Synthetic
                } else {
                    DataSource::Csv(PathBuf::from(v))
                }
            }
            "generator" => self.generator = Generator::parse(v)?,
            "channels" => self.channels = parse_num(key, v)?,
            "length" => self.length = parse_num(key, v)?,
            "n_cps" => self.n_cps = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "scale_shift" => self.scale_shift = parse_num(key, v)?,
            "dof" => self.dof = parse_num(key, v)?,
            "normalize" => self.normalize = parse_num(key, v)?,
            "split" => {
                let f: Vec<f64> = parse_list(key, v)?;
                if f.len() != 3 {
                    return Err(Error::config("split needs three fractions"));
                }
                self.split = SplitSpec::new(f[0], f[1], f[2])?;
            }
            "model" => self.model = ModelFamily::parse(v)?,
            "embedding" => {
                self.embedding = match v {
                    "auto" => None,
                    "vector" => Some(EmbeddingMode::Vector),
                    "sequence" => Some(EmbeddingMode::Sequence),
                    _ => return Err(Error::config(format!("unknown embedding mode '{v}'"))),
                }
            }
            "window" => self.window = parse_num(key, v)?,
            "stride" => self.stride = parse_num(key, v)?,
            "train_stride" => self.train_stride = parse_num(key, v)?,
            "val_stride" => self.val_stride = parse_num(key, v)?,
            "code_size" => self.code_size = parse_num(key, v)?,
            "hidden" => self.hidden = parse_num(key, v)?,
            "depth" => self.depth = parse_num(key, v)?,
            "kernel_width" => self.kernel_width = parse_num(key, v)?,
            "activation" => self.activation = Activation::parse(v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "cap_c" => self.cap_c = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "val_every" => self.val_every = parse_num(key, v)?,
            "byol_beta" => self.byol_beta = parse_num(key, v)?,
            "byol_head_hidden" => self.byol_head_hidden = parse_num(key, v)?,
            "statistic" => self.statistic = Statistic::parse(v)?,
            "margins" => self.margins = parse_list(key, v)?,
            "verify_pairs" => self.verify_pairs = parse_num(key, v)?,
            "verify_iterations" => self.verify_iterations = parse_num(key, v)?,
            "verify_inversions" => self.verify_inversions = parse_num(key, v)?,
            "lr_length" => self.lr_length = parse_num(key, v)?,
            "lr_samples" => self.lr_samples = parse_num(key, v)?,
            "lr_delta" => self.lr_delta = parse_num(key, v)?,
            "power_sizes" => self.power_sizes = parse_list(key, v)?,
            "power_trials" => self.power_trials = parse_num(key, v)?,
            "power_alpha" => self.power_alpha = parse_num(key, v)?,
            "power_delta" => self.power_delta = parse_num(key, v)?,
            "dynamics_segment" => self.dynamics_segment = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => {
                return Err(Error::config(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key = value` document on top of `self`. Blank lines and
    /// lines starting with `#` are ignored. Errors name the offending line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {}: expected key = value, got '{line}'",
                    n + 1
                ))
            })?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(message) => Error::config(format!("line {}: {message}", n + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every key except `out`, one per line in a fixed order. Parsing this
    /// text reproduces the configuration.
    pub fn canonical(&self) -> String {
        let data = match &self.data {
            DataSource::Synthetic => "synthetic".to_string(),
            DataSource::Csv(p) => p.display().to_string(),
        };
        let s = &self.split;
        let entries: Vec<(&str, String)> = vec![
            ("data", data),
            ("generator", self.generator.name().into()),
            ("channels", self.channels.to_string()),
            ("length", self.length.to_string()),
            ("n_cps", self.n_cps.to_string()),
            ("delta", self.delta.to_string()),
            ("scale_shift", self.scale_shift.to_string()),
            ("dof", self.dof.to_string()),
            ("normalize", self.normalize.to_string()),
            ("split", format!("{},{},{}", s.train, s.val, s.test)),
            ("model", self.model.name().into()),
            ("embedding", embedding_name(self.embedding).into()),
            ("window", self.window.to_string()),
            ("stride", self.stride.to_string()),
            ("train_stride", self.train_stride.to_string()),
            ("val_stride", self.val_stride.to_string()),
            ("code_size", self.code_size.to_string()),
            ("hidden", self.hidden.to_string()),
            ("depth", self.depth.to_string()),
            ("kernel_width", self.kernel_width.to_string()),
            ("activation", self.activation.name().into()),
            ("dropout", self.dropout.to_string()),
            ("cap_c", self.cap_c.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("val_every", self.val_every.to_string()),
            ("byol_beta", self.byol_beta.to_string()),
            ("byol_head_hidden", self.byol_head_hidden.to_string()),
            ("statistic", self.statistic.name().into()),
            ("margins", join(&self.margins)),
            ("verify_pairs", self.verify_pairs.to_string()),
            ("verify_iterations", self.verify_iterations.to_string()),
            ("verify_inversions", self.verify_inversions.to_string()),
            ("lr_length", self.lr_length.to_string()),
            ("lr_samples", self.lr_samples.to_string()),
            ("lr_delta", self.lr_delta.to_string()),
            ("power_sizes", join(&self.power_sizes)),
            ("power_trials", self.power_trials.to_string()),
            ("power_alpha", self.power_alpha.to_string()),
            ("power_delta", self.power_delta.to_string()),
            ("dynamics_segment", self.dynamics_segment.to_string()),
            ("seed", self.seed.to_string()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), lowercase hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    /// Embedding mode implied by the statistic and the `embedding` key.
    pub fn embedding_mode(&self) -> EmbeddingMode {
        self.embedding.unwrap_or(self.statistic.required_mode())
    }

    /// Cross-field checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        let mode = self.embedding_mode();
        if mode != self.statistic.required_mode() {
            return Err(Error::config(format!(
                "statistic '{}' needs {} embeddings but embedding = {}",
                self.statistic.name(),
                embedding_name(Some(self.statistic.required_mode())),
                embedding_name(Some(mode)),
            )));
        }
        let positive = [
            ("window", self.window),
            ("stride", self.stride),
            ("train_stride", self.train_stride),
            ("val_stride", self.val_stride),
            ("code_size", self.code_size),
            ("hidden", self.hidden),
            ("depth", self.depth),
            ("kernel_width", self.kernel_width),
            ("batch_size", self.batch_size),
            ("val_every", self.val_every),
            ("channels", self.channels),
            ("length", self.length),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("'{k}' must be positive")));
        }
        if self.margins.is_empty() || self.margins.contains(&0) {
            return Err(Error::config(
                "margins must be a nonempty list of positive integers",
            ));
        }
        if !(self.cap_c > 0.0 && self.cap_c.is_finite()) {
            return Err(Error::config(format!(
                "cap_c must be > 0, got {}",
                self.cap_c
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr must be > 0"));
        }
        self.encoder_config(self.channels.max(1))?;
        Ok(())
    }

    /// Extra check for commands that invert the encoder.
    pub fn validate_invertible(&self) -> Result<()> {
        if self.model.spectral() && self.cap_c >= 1.0 {
            return Err(Error::config(format!(
                "invertibility checks need cap_c < 1, got {}",
                self.cap_c
            )));
        }
        Ok(())
    }

    pub fn sn_config(&self) -> Option<SNConfig> {
        self.model
            .spectral()
            .then(|| SNConfig::with_cap(self.cap_c))
    }

    /// Encoder architecture for `input_dim` channels. BYOL families use the
    /// fixed four-block ReLU backbone at the configured width and code size.
    pub fn encoder_config(&self, input_dim: usize) -> Result<EncoderConfig> {
        let cfg = if self.model.byol() {
            byol_backbone_config(input_dim, self.hidden, self.code_size, self.sn_config())
        } else {
            EncoderConfig {
                input_dim,
                hidden: self.hidden,
                depth: self.depth,
                kernel_width: self.kernel_width,
                output_dim: Some(self.code_size),
                activation: self.activation,
                dropout: self.dropout,
                sn: self.sn_config(),
                ..EncoderConfig::default()
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
