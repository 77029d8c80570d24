// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::specnorm::{
    conv_norm_factor, estimate_spectral_norm, matrix_dims, project_spectral_norm, SNConfig,
    SpectralNormState,
};

/// Power iterations per convergence check of [`EncoderModel::project_converged`].
const CONVERGE_CHUNK: usize = 10;
const CONVERGE_MAX_CHUNKS: usize = 1000;
/// Relative change per chunk below which the estimate counts as settled.
const CONVERGE_TOL: f64 = 1e-10;

/// Nonlinearity inside each residual branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }

    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// Shape and regularization of an [`EncoderModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Input channels `D`.
    pub input_dim: usize,
    /// Width of the residual stream.
    pub hidden: usize,
    /// Number of residual blocks `L`.
    pub depth: usize,
    /// Convolution taps per block; `1` gives per-timestamp dense blocks.
    pub kernel_width: usize,
    /// Block `l` uses dilation `dilation_base^l`.
    pub dilation_base: usize,
    /// Code size `d`. `None` drops the output head so that `d == hidden`.
    pub output_dim: Option<usize>,
    pub activation: Activation,
    pub dropout: f64,
    /// Spectral normalization of the block weights; `None` for vanilla models.
    pub sn: Option<SNConfig>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden: 128,
            depth: 8,
            kernel_width: 3,
            dilation_base: 2,
            output_dim: Some(16),
            activation: Activation::Tanh,
            dropout: 0.1,
            sn: Some(SNConfig::default()),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.kernel_width == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if self.dilation_base == 0 {
            return Err(Error::config("dilation base must be >= 1"));
        }
        if self.output_dim == Some(0) {
            return Err(Error::config("code size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if let Some(sn) = &self.sn {
            sn.validate()?;
        }
        Ok(())
    }

    pub fn code_size(&self) -> usize {
        self.output_dim.unwrap_or(self.hidden)
    }
}

/// Affine map over the channel axis, `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `(out, in)`.
    pub weight: Tensor,
    /// `(out,)`.
    pub bias: Tensor,
}

impl Dense {
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: Tensor::randn(&[output, input], 1.0 / (input as f64).sqrt(), rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Residual block `h(X) = X + act(conv(X; W) + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    /// `(hidden, width, hidden)` kernel.
    pub weight: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
    pub sn_state: SpectralNormState,
}

impl ResidualBlock {
    pub fn kernel_width(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Upper bound on the operator norm of the block's linear map, using the
    /// current power-iteration state.
    pub fn operator_norm_bound(&mut self, iterations: usize) -> f64 {
        conv_norm_factor(self.kernel_width())
            * estimate_spectral_norm(&self.weight, &mut self.sn_state, iterations)
    }

    /// Caps the operator-norm bound at `c`.
    pub fn project(&mut self, c: f64, iterations: usize) -> f64 {
        let factor = conv_norm_factor(self.kernel_width());
        factor * project_spectral_norm(&mut self.weight, c / factor, &mut self.sn_state, iterations)
    }
}

/// Handles of an encoder's parameters on a tape, in [`EncoderModel::params`] order.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    input: (Var, Var),
    blocks: Vec<(Var, Var)>,
    head: Option<(Var, Var)>,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.input.0, self.input.1];
        for &(w, b) in &self.blocks {
            v.push(w);
            v.push(b);
        }
        if let Some((w, b)) = self.head {
            v.push(w);
            v.push(b);
        }
        v
    }
}

/// `G = h ∘ g`: an affine input projection `g`, a stack of residual blocks
/// `h = h_L ∘ … ∘ h_1`, and an optional linear output head.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub input: Dense,
    pub blocks: Vec<ResidualBlock>,
    pub head: Option<Dense>,
}

impl EncoderModel {
    /// Random initialization; block weights are projected onto the cap
    /// straight away when spectral normalization is enabled.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let k = config.kernel_width;
        let input = Dense::init(config.input_dim, h, &mut rng);
        let std = 1.0 / ((h * k) as f64).sqrt();
        let blocks = (0..config.depth)
            .map(|l| {
                let weight = Tensor::randn(&[h, k, h], std, &mut rng);
                let (rows, cols) = matrix_dims(&weight);
                ResidualBlock {
                    weight,
                    bias: Tensor::zeros(&[h]),
                    dilation: config.dilation_base.pow(l as u32).max(1),
                    sn_state: SpectralNormState::new(rows, cols, &mut rng),
                }
            })
            .collect();
        let head = config.output_dim.map(|d| Dense::init(h, d, &mut rng));
        let mut model = Self {
            config,
            input,
            blocks,
            head,
        };
        if model.config.sn.is_some() {
            model.project_converged();
        }
        Ok(model)
    }

    /// Model whose `g` is the identity and whose residual branches are
    /// identically zero, so that `G(X) = X`. Requires an activation with
    /// `act(0) = 0`.
    pub fn identity(channels: usize, depth: usize, activation: Activation) -> Result<Self> {
        if activation == Activation::Sigmoid {
            return Err(Error::config("sigmoid branches cannot vanish identically"));
        }
        let config = EncoderConfig {
            input_dim: channels,
            hidden: channels,
            depth,
            kernel_width: 1,
            dilation_base: 1,
            output_dim: None,
            activation,
            dropout: 0.0,
            sn: None,
        };
        let mut model = Self::new(config, 0)?;
        model.input.weight = Tensor::eye(channels);
        for b in &mut model.blocks {
            b.weight = Tensor::zeros(b.weight.shape());
        }
        Ok(model)
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden
    }

    pub fn code_size(&self) -> usize {
        self.config.code_size()
    }

    pub fn sn_config(&self) -> Option<SNConfig> {
        self.config.sn
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.input.weight, &self.input.bias];
        for b in &self.blocks {
            v.push(&b.weight);
            v.push(&b.bias);
        }
        if let Some(h) = &self.head {
            v.push(&h.weight);
            v.push(&h.bias);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.input.weight, &mut self.input.bias];
        for b in &mut self.blocks {
            v.push(&mut b.weight);
            v.push(&mut b.bias);
        }
        if let Some(h) = &mut self.head {
            v.push(&mut h.weight);
            v.push(&mut h.bias);
        }
        v
    }

    /// Parameter names in [`params`](Self::params) order.
    pub fn param_names(&self) -> Vec<String> {
        let mut v = vec!["input.weight".to_string(), "input.bias".to_string()];
        for l in 0..self.blocks.len() {
            v.push(format!("block{l}.weight"));
            v.push(format!("block{l}.bias"));
        }
        if self.head.is_some() {
            v.push("head.weight".into());
            v.push("head.bias".into());
        }
        v
    }

    /// Records the parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        EncoderVars {
            input: (leaf(&self.input.weight), leaf(&self.input.bias)),
            blocks: self
                .blocks
                .iter()
                .map(|b| (leaf(&b.weight), leaf(&b.bias)))
                .collect(),
            head: self.head.as_ref().map(|h| (leaf(&h.weight), leaf(&h.bias))),
        }
    }

    /// Residual stream `h(g(X))` for a `(batch, time, D)` input.
    pub fn forward_hidden<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &EncoderVars,
        x: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let xs = tape.shape(x);
        if xs.len() != 3 || xs[2] != self.config.input_dim {
            return Err(Error::dim(format!(
                "encoder expects (batch, time, {}) input, got {xs:?}",
                self.config.input_dim
            )));
        }
        let mut z = tape.dense(x, vars.input.0, Some(vars.input.1))?;
        for (block, &(w, b)) in self.blocks.iter().zip(&vars.blocks) {
            let pre = tape.conv1d(z, w, Some(b), block.dilation)?;
            let act = self.config.activation.apply(tape, pre);
            let act = tape.dropout(act, self.config.dropout, training, rng)?;
            z = tape.add(z, act)?;
        }
        Ok(z)
    }

    /// Per-timestamp embeddings `(batch, time, d)`.
    pub fn forward_sequence<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &EncoderVars,
        x: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let z = self.forward_hidden(tape, vars, x, training, rng)?;
        match vars.head {
            Some((w, b)) => tape.dense(z, w, Some(b)),
            None => Ok(z),
        }
    }

    /// Window embeddings `(batch, d)`: time-averaged residual stream followed
    /// by the output head.
    pub fn forward_vector<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &EncoderVars,
        x: Var,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let z = self.forward_hidden(tape, vars, x, training, rng)?;
        let pooled = tape.mean_time(z)?;
        match vars.head {
            Some((w, b)) => tape.dense(pooled, w, Some(b)),
            None => Ok(pooled),
        }
    }

    fn infer(&self, x: &Tensor, vector: bool) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let batched = match x.ndim() {
            2 => x.reshape(&[1, x.shape()[0], x.shape()[1]])?,
            3 => x.clone(),
            _ => return Err(Error::dim(format!("cannot encode shape {:?}", x.shape()))),
        };
        let xv = tape.constant(batched);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = if vector {
            self.forward_vector(&mut tape, &vars, xv, false, &mut rng)?
        } else {
            self.forward_sequence(&mut tape, &vars, xv, false, &mut rng)?
        };
        let out = tape.value(out).clone();
        if x.ndim() == 2 {
            let s = out.shape()[1..].to_vec();
            out.reshape(&s)
        } else {
            Ok(out)
        }
    }

    /// `(w, D) -> (w, d)`, or batched `(B, w, D) -> (B, w, d)`. Dropout off.
    pub fn encode_sequence(&self, x: &Tensor) -> Result<Tensor> {
        self.infer(x, false)
    }

    /// `(w, D) -> (d,)`, or batched `(B, w, D) -> (B, d)`. Dropout off.
    pub fn encode_vector(&self, x: &Tensor) -> Result<Tensor> {
        self.infer(x, true)
    }

    /// `g(X)` for a `(time, D)` or `(batch, time, D)` input.
    pub fn input_projection(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let w = tape.constant(self.input.weight.clone());
        let b = tape.constant(self.input.bias.clone());
        let y = tape.dense(xv, w, Some(b))?;
        Ok(tape.value(y).clone())
    }

    /// Residual branch `g_l(Z)` of block `l` on a `(batch, time, hidden)` input.
    pub fn block_branch(&self, l: usize, z: &Tensor) -> Result<Tensor> {
        let block = &self.blocks[l];
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let w = tape.constant(block.weight.clone());
        let b = tape.constant(block.bias.clone());
        let pre = tape.conv1d(zv, w, Some(b), block.dilation)?;
        let act = self.config.activation.apply(&mut tape, pre);
        Ok(tape.value(act).clone())
    }

    /// `h_l(Z) = Z + g_l(Z)`.
    pub fn apply_block(&self, l: usize, z: &Tensor) -> Result<Tensor> {
        z.add(&self.block_branch(l, z)?)
    }

    /// `h(Z) = h_L ∘ … ∘ h_1(Z)` on a `(batch, time, hidden)` input.
    pub fn apply_hidden(&self, z: &Tensor) -> Result<Tensor> {
        let mut cur = z.clone();
        for l in 0..self.blocks.len() {
            cur = self.apply_block(l, &cur)?;
        }
        Ok(cur)
    }

    /// Projects every block onto the spectral cap, returning the largest
    /// operator-norm bound seen before projection. No-op without SN.
    pub fn project(&mut self, iterations: usize) -> f64 {
        let Some(sn) = self.config.sn else {
            return self.max_layer_norm(iterations);
        };
        self.blocks
            .iter_mut()
            .map(|b| b.project(sn.c, iterations))
            .fold(0.0, f64::max)
    }

    /// Caps every block after running warm-started power iteration until the
    /// estimate settles, so that the cap holds for the converged norm rather
    /// than for a partial estimate. Blocks with a small spectral gap need far
    /// more than the per-step iteration count.
    pub fn project_converged(&mut self) -> f64 {
        let Some(sn) = self.config.sn else {
            return self.max_layer_norm(CONVERGE_CHUNK);
        };
        for b in &mut self.blocks {
            let mut prev = b.operator_norm_bound(CONVERGE_CHUNK);
            for _ in 1..CONVERGE_MAX_CHUNKS {
                let next = b.operator_norm_bound(CONVERGE_CHUNK);
                let settled = (next - prev).abs() <= CONVERGE_TOL * next;
                prev = next;
                if settled {
                    break;
                }
            }
            b.project(sn.c, 1);
        }
        self.cached_max_layer_norm()
    }

    /// Operator-norm bound of every block.
    pub fn layer_norms(&mut self, iterations: usize) -> Vec<f64> {
        self.blocks
            .iter_mut()
            .map(|b| b.operator_norm_bound(iterations))
            .collect()
    }

    /// Largest operator-norm bound as last computed by the warm-started power
    /// iteration, without iterating further.
    pub fn cached_max_layer_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| conv_norm_factor(b.kernel_width()) * b.sn_state.last_estimate())
            .fold(0.0, f64::max)
    }

    pub fn max_layer_norm(&mut self, iterations: usize) -> f64 {
        self.layer_norms(iterations).into_iter().fold(0.0, f64::max)
    }

    /// Rescales block `l` so that its operator-norm bound equals `target`.
    pub fn rescale_block(&mut self, l: usize, target: f64, iterations: usize) {
        let current = self.blocks[l].operator_norm_bound(iterations);
        if current > 0.0 {
            self.blocks[l].weight.scale_in_place(target / current);
        }
    }
}
