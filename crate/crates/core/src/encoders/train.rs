// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EncoderModel;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// A self-supervised objective that owns an encoder and its optimizer.
pub trait Trainer: Clone {
    fn encoder(&self) -> &EncoderModel;

    fn encoder_mut(&mut self) -> &mut EncoderModel;

    /// Training-mode loss of a batch of `(2w, D)` intervals together with the
    /// gradient of every trainable parameter.
    fn loss_and_grads(&self, batch: &[&Tensor], rng: &mut ChaCha8Rng)
        -> Result<(f64, Vec<Tensor>)>;

    /// Applies one optimizer step with gradients from
    /// [`loss_and_grads`](Self::loss_and_grads).
    fn apply(&mut self, grads: &[Tensor]);

    /// Inference-mode loss, used for checkpoint selection.
    fn eval_loss(&self, batch: &[&Tensor], rng: &mut ChaCha8Rng) -> Result<f64>;
}

/// Loop settings shared by every objective.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Validate every this many epochs (the last epoch is always validated).
    pub val_every: usize,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            seed: 0,
            val_every: 1,
            max_steps: None,
        }
    }
}

/// One optimizer step of the loss history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    /// Largest block operator-norm bound right before the optimizer step.
    pub max_layer_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<LossRecord>,
    /// `(epoch, validation loss)`, epochs counted from one.
    pub validation: Vec<(usize, f64)>,
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn steps(&self) -> usize {
        self.history.len()
    }
}

/// Mean validation loss. Batches come from one fixed shuffle, as in
/// training: consecutive windows overlap almost entirely, and batching them
/// together would make the instance contrast meaningless.
fn batched_eval<T: Trainer>(
    trainer: &T,
    windows: &[Tensor],
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut rng);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let batch: Vec<&Tensor> = chunk.iter().map(|&i| &windows[i]).collect();
        total += trainer.eval_loss(&batch, &mut rng)? * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Minibatch training with spectral projection before every optimizer step.
///
/// Each step projects the encoder's blocks (one warm-started power
/// iteration), records the post-projection norm bound, computes the loss and
/// gradients, and applies the update. A non-finite loss aborts before the
/// update. After training the trainer is reset to the epoch with the lowest
/// validation loss (when `val` is nonempty), and the encoder is projected
/// once more with power iteration run to convergence.
pub fn train<T: Trainer>(
    trainer: &mut T,
    train_windows: &[Tensor],
    val: &[Tensor],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if opts.batch_size == 0 || opts.val_every == 0 {
        return Err(Error::config(
            "batch size and validation period must be >= 1",
        ));
    }
    if train_windows.is_empty() && opts.epochs > 0 {
        return Err(Error::contract("no training windows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let val_seed = opts.seed ^ 0x5eed_0f_7a1;
    let mut outcome = TrainOutcome::default();
    let mut best: Option<(f64, T)> = None;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let sn = trainer.encoder().sn_config();

    'epochs: for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size) {
            if opts.max_steps.is_some_and(|m| outcome.history.len() >= m) {
                break 'epochs;
            }
            let step = outcome.history.len();
            let max_layer_norm = match sn {
                Some(cfg) => {
                    let enc = trainer.encoder_mut();
                    enc.project(cfg.iterations_per_step);
                    enc.cached_max_layer_norm()
                }
                None => trainer.encoder_mut().max_layer_norm(1),
            };
            let batch: Vec<&Tensor> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let (loss, grads) = trainer.loss_and_grads(&batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, loss });
            }
            trainer.apply(&grads);
            outcome.history.push(LossRecord {
                step,
                loss,
                max_layer_norm,
            });
        }
        if !val.is_empty() && (epoch % opts.val_every == 0 || epoch == opts.epochs) {
            let v = batched_eval(trainer, val, opts.batch_size, val_seed)?;
            log::info!("epoch {epoch}: validation loss {v:.6}");
            outcome.validation.push((epoch, v));
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, trainer.clone()));
                outcome.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, snapshot)) = best {
        *trainer = snapshot;
    }
    if sn.is_some() && !outcome.history.is_empty() {
        trainer.encoder_mut().project_converged();
    }
    Ok(outcome)
}

/// Writes `step,loss,max_layer_norm` rows.
pub fn write_loss_csv(history: &[LossRecord], path: &Path) -> Result<()> {
    let mut out = String::from("step,loss,max_layer_norm\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.12e},{:.12e}\n",
            r.step, r.loss, r.max_layer_norm
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
