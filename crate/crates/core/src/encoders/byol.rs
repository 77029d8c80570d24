// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::random_crop_pair;
use super::losses::{byol_loss, ema_update};
use super::model::Dense;
use super::train::Trainer;
use super::{Activation, EncoderConfig, EncoderModel};
use crate::diffcore::{Adam, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::specnorm::SNConfig;

/// Two-layer perceptron with a ReLU between the layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub first: Dense,
    pub second: Dense,
}

impl Mlp {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            first: Dense::init(input, hidden, rng),
            second: Dense::init(hidden, output, rng),
        }
    }

    fn params(&self) -> [&Tensor; 4] {
        [
            &self.first.weight,
            &self.first.bias,
            &self.second.weight,
            &self.second.bias,
        ]
    }

    fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.first.weight,
            &mut self.first.bias,
            &mut self.second.weight,
            &mut self.second.bias,
        ]
    }

    fn forward(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<(Var, [Var; 4])> {
        let leaf = |tape: &mut Tape, t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let p = self.params().map(|t| leaf(tape, t));
        let h = tape.dense(x, p[0], Some(p[1]))?;
        let h = tape.relu(h);
        Ok((tape.dense(h, p[2], Some(p[3]))?, p))
    }
}

/// Backbone configuration used by the BYOL objective: four dilated ReLU
/// convolution blocks with dropout.
pub fn byol_backbone_config(
    input_dim: usize,
    hidden: usize,
    code: usize,
    sn: Option<SNConfig>,
) -> EncoderConfig {
    EncoderConfig {
        input_dim,
        hidden,
        depth: 4,
        kernel_width: 3,
        dilation_base: 2,
        output_dim: Some(code),
        activation: Activation::Relu,
        dropout: 0.1,
        sn,
    }
}

/// Online/target pair trained by matching normalized predictions to
/// target projections. Only the online side receives gradients; the target
/// follows by exponential moving average.
#[derive(Clone, Debug)]
pub struct BYOLTrainer {
    pub online: EncoderModel,
    pub projector: Mlp,
    pub predictor: Mlp,
    pub target: EncoderModel,
    pub target_projector: Mlp,
    pub beta: f64,
    pub optimizer: Adam,
}

impl BYOLTrainer {
    /// `head_hidden` and `projection` size the two MLP heads.
    pub fn new(
        online: EncoderModel,
        head_hidden: usize,
        projection: usize,
        beta: f64,
        lr: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::config(format!(
                "EMA rate must be in (0, 1), got {beta}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb701);
        let code = online.code_size();
        let projector = Mlp::new(code, head_hidden, projection, &mut rng);
        let predictor = Mlp::new(projection, head_hidden, projection, &mut rng);
        Ok(Self {
            target: online.clone(),
            target_projector: projector.clone(),
            online,
            projector,
            predictor,
            beta,
            optimizer: Adam::new(lr),
        })
    }

    fn batch_loss(
        &self,
        tape: &mut Tape,
        batch: &[&Tensor],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<Var>)> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let mut v1 = Vec::with_capacity(batch.len());
        let mut v2 = Vec::with_capacity(batch.len());
        for x in batch {
            let p = random_crop_pair(x, rng)?;
            v1.push(p.view1);
            v2.push(p.view2);
        }
        let x1 = tape.constant(Tensor::stack(&v1.iter().collect::<Vec<_>>())?);
        let x2 = tape.constant(Tensor::stack(&v2.iter().collect::<Vec<_>>())?);

        let online_vars = self.online.bind(tape, training);
        let target_vars = self.target.bind(tape, false);
        let mut params = online_vars.all();
        let mut online_branch = |tape: &mut Tape, x: Var, rng: &mut ChaCha8Rng| -> Result<Var> {
            let y = self
                .online
                .forward_vector(tape, &online_vars, x, training, rng)?;
            let (z, pz) = self.projector.forward(tape, y, training)?;
            let (q, pq) = self.predictor.forward(tape, z, training)?;
            params.extend(pz);
            params.extend(pq);
            Ok(q)
        };
        let q1 = online_branch(tape, x1, rng)?;
        let q2 = online_branch(tape, x2, rng)?;
        let target_branch = |tape: &mut Tape, x: Var, rng: &mut ChaCha8Rng| -> Result<Var> {
            let y = self
                .target
                .forward_vector(tape, &target_vars, x, training, rng)?;
            Ok(self.target_projector.forward(tape, y, false)?.0)
        };
        let t1 = target_branch(tape, x1, rng)?;
        let t2 = target_branch(tape, x2, rng)?;
        let l12 = byol_loss(tape, q1, t2)?;
        let l21 = byol_loss(tape, q2, t1)?;
        let both = tape.add(l12, l21)?;
        Ok((tape.affine(both, 0.5, 0.0), params))
    }

    fn online_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.online.params_mut();
        v.extend(self.projector.params_mut());
        v.extend(self.predictor.params_mut());
        v
    }
}

impl Trainer for BYOLTrainer {
    fn encoder(&self) -> &EncoderModel {
        &self.online
    }

    fn encoder_mut(&mut self) -> &mut EncoderModel {
        &mut self.online
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
        // Each head was bound once per view; both bindings share the same
        // weights, so their gradients add.
        let n_backbone = self.online.params().len();
        let mut out: Vec<Tensor> = params[..n_backbone].iter().map(|&p| grads.wrt(p)).collect();
        let heads = &params[n_backbone..];
        let per_view = heads.len() / 2;
        for k in 0..per_view {
            let g = grads.wrt(heads[k]).add(&grads.wrt(heads[k + per_view]))?;
            out.push(g);
        }
        Ok((value, out))
    }

    fn apply(&mut self, grads: &[Tensor]) {
        let mut opt = std::mem::replace(&mut self.optimizer, Adam::new(1.0));
        opt.step(&mut self.online_params_mut(), grads);
        self.optimizer = opt;
        let beta = self.beta;
        let mut target = self.target.params_mut();
        target.extend(self.target_projector.params_mut());
        let mut online = self.online.params();
        online.extend(self.projector.params());
        ema_update(&mut target, &online, beta).expect("online and target share a layout");
    }

    fn eval_loss(&self, batch: &[&Tensor], rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _) = self.batch_loss(&mut tape, batch, false, rng)?;
        Ok(tape.value(loss).item())
    }
}
