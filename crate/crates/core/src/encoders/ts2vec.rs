// SPDX-License-Identifier: MIT OR Apache-2.0

use rand_chacha::ChaCha8Rng;

use super::augment::{sample_crop_starts, time_slice};
use super::losses::ts2vec_hierarchical_loss;
use super::train::Trainer;
use super::EncoderModel;
use crate::diffcore::{Adam, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Hierarchical contrastive training of a per-timestamp encoder.
///
/// Every batch shares one crop geometry: two overlapping length-`w` crops of
/// each `(2w, D)` interval are encoded separately and contrasted on their
/// overlap.
#[derive(Clone, Debug)]
pub struct TS2VecTrainer {
    pub model: EncoderModel,
    pub optimizer: Adam,
}

impl TS2VecTrainer {
    pub fn new(model: EncoderModel, lr: f64) -> Self {
        Self {
            model,
            optimizer: Adam::new(lr),
        }
    }

    fn batch_loss(
        &self,
        tape: &mut Tape,
        batch: &[&Tensor],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<Var>)> {
        let first = batch
            .first()
            .ok_or_else(|| Error::contract("empty batch"))?;
        let len = first.shape()[0];
        let w = len / 2;
        if w < 1 {
            return Err(Error::dim(format!(
                "training interval of length {len} is too short"
            )));
        }
        let (s1, s2) = sample_crop_starts(len, w, true, rng)?;
        let omega = s1.max(s2)..(s1.min(s2) + w);
        let crops = |s: usize| -> Result<Tensor> {
            let views = batch
                .iter()
                .map(|x| time_slice(x, s, w))
                .collect::<Result<Vec<_>>>()?;
            Tensor::stack(&views.iter().collect::<Vec<_>>())
        };
        let vars = self.model.bind(tape, training);
        let x1 = tape.constant(crops(s1)?);
        let x2 = tape.constant(crops(s2)?);
        let h1 = self
            .model
            .forward_sequence(tape, &vars, x1, training, rng)?;
        let h2 = self
            .model
            .forward_sequence(tape, &vars, x2, training, rng)?;
        let a = tape.slice_time(h1, omega.start - s1, omega.len())?;
        let b = tape.slice_time(h2, omega.start - s2, omega.len())?;
        Ok((ts2vec_hierarchical_loss(tape, a, b)?, vars.all()))
    }
}

impl Trainer for TS2VecTrainer {
    fn encoder(&self) -> &EncoderModel {
        &self.model
    }

    fn encoder_mut(&mut self) -> &mut EncoderModel {
        &mut self.model
    }

    fn loss_and_grads(
        &self,
        batch: &[&Tensor],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let (loss, params) = self.batch_loss(&mut tape, batch, true, rng)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        Ok((value, params.into_iter().map(|p| grads.wrt(p)).collect()))
    }

    fn apply(&mut self, grads: &[Tensor]) {
        self.optimizer.step(&mut self.model.params_mut(), grads);
    }

    fn eval_loss(&self, batch: &[&Tensor], rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _) = self.batch_loss(&mut tape, batch, false, rng)?;
        Ok(tape.value(loss).item())
    }
}
