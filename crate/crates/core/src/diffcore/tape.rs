// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse insertion
//! order, which is a valid reverse topological order because a node can only
//! reference nodes recorded before it.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        dilation: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    MaxPoolTime {
        x: Var,
        argmax: Vec<usize>,
    },
    MeanTime(Var),
    L2Normalize {
        x: Var,
        norms: Vec<f64>,
    },
    Sum(Var),
    Reshape(Var),
    SliceTime {
        x: Var,
        start: usize,
    },
    InstanceContrast {
        h: Var,
        h_alt: Var,
    },
    TemporalContrast {
        h: Var,
        h_alt: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for later differentiation.
///
/// A tape is single-threaded. Independent tapes share nothing, so separate
/// training contexts may run concurrently.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zero when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        let shape = &self.shapes[var.0];
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Standard matrix product of two 2-D tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let s = av[i * k + p];
                if s != 0.0 {
                    axpy(s, &bv[p * n..(p + 1) * n], row);
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Affine map over the last axis: `y = x Wᵀ + b` with `W` shaped `(out, in)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 || *xs.last().unwrap() != ws[1] {
            return Err(Error::dim(format!("dense layer {ws:?} applied to {xs:?}")));
        }
        let (out_dim, in_dim) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [out_dim] {
                return Err(Error::dim("dense bias shape"));
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let n = xv.len() / in_dim;
        let mut out = vec![0.0; n * out_dim];
        for r in 0..n {
            let xr = &xv[r * in_dim..(r + 1) * in_dim];
            for o in 0..out_dim {
                let mut acc = bv.map_or(0.0, |b| b[o]);
                acc += dot(&wv[o * in_dim..(o + 1) * in_dim], xr);
                out[r * out_dim + o] = acc;
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = out_dim;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(Tensor::new(shape, out)?, Op::Dense { x, w, b }, rg))
    }

    /// Dilated 1-D convolution along the time axis with zero "same" padding.
    ///
    /// `x` is `(batch, time, in)` and `w` is `(out, width, in)`. Tap `j` reads
    /// `x[t + j*dilation - pad]` with `pad = (width-1)*dilation/2`, so the
    /// output has the same length as the input.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if dilation == 0 {
            return Err(Error::contract("dilation must be >= 1"));
        }
        if xs.len() != 3 || ws.len() != 3 || xs[2] != ws[2] {
            return Err(Error::dim(format!(
                "conv1d kernel {ws:?} applied to {xs:?}"
            )));
        }
        let (batch, len, cin) = (xs[0], xs[1], xs[2]);
        let (cout, width) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::dim("conv1d bias shape"));
            }
        }
        let pad = (width - 1) * dilation / 2;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; batch * len * cout];
        for bi in 0..batch {
            let xb = &xv[bi * len * cin..(bi + 1) * len * cin];
            for t in 0..len {
                let orow = &mut out[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                if let Some(bv) = bv {
                    orow.copy_from_slice(bv);
                }
                for j in 0..width {
                    let Some(src) = (t + j * dilation).checked_sub(pad) else {
                        continue;
                    };
                    if src >= len {
                        continue;
                    }
                    let xr = &xb[src * cin..(src + 1) * cin];
                    for (o, acc) in orow.iter_mut().enumerate() {
                        let off = (o * width + j) * cin;
                        *acc += dot(&wv[off..off + cin], xr);
                    }
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(
            Tensor::new(vec![batch, len, cout], out)?,
            Op::Conv1d { x, w, b, dilation },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(format!(
                "elementwise product of {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(&[x]);
        self.push(out, Op::Affine { x, scale }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let rg = self.rg(&[x]);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    /// Inverted dropout: kept units are scaled by `1/(1-rate)` so that
    /// inference needs no rescaling. Identity when `training` is false.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!(
                "dropout rate {rate} not in [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    /// Non-overlapping max pooling along the time axis of `(batch, time, ch)`.
    /// Trailing timestamps that do not fill a whole window are dropped.
    pub fn max_pool_time(&mut self, x: Var, width: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if width == 0 {
            return Err(Error::contract("pool width must be >= 1"));
        }
        let (batch, len, ch) = time_dims(&xs)?;
        let out_len = len / width;
        if out_len == 0 {
            return Err(Error::dim(format!("cannot pool length {len} by {width}")));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * out_len * ch);
        let mut argmax = Vec::with_capacity(batch * out_len * ch);
        for b in 0..batch {
            for p in 0..out_len {
                for c in 0..ch {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for k in 0..width {
                        let idx = (b * len + p * width + k) * ch + c;
                        if xv[idx] > best_v || best == usize::MAX {
                            best_v = xv[idx];
                            best = idx;
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
        let mut shape = xs.clone();
        let time_axis = shape.len() - 2;
        shape[time_axis] = out_len;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MaxPoolTime { x, argmax }, rg))
    }

    /// Mean over the time axis: `(batch, time, ch) -> (batch, ch)`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, len, ch) = time_dims(&xs)?;
        let xv = self.value(x).data();
        let mut out = vec![0.0; batch * ch];
        for b in 0..batch {
            for t in 0..len {
                axpy(
                    1.0 / len as f64,
                    &xv[(b * len + t) * ch..(b * len + t + 1) * ch],
                    &mut out[b * ch..(b + 1) * ch],
                );
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![batch, ch], out)?, Op::MeanTime(x), rg))
    }

    /// Scales every row (last axis) to unit Euclidean norm. All-zero rows stay
    /// zero and a warning is logged.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let d = xv.last_dim();
        let mut data = xv.data().to_vec();
        let mut norms = Vec::with_capacity(data.len() / d);
        for row in data.chunks_exact_mut(d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            } else {
                log::warn!("l2_normalize: zero row left unnormalized");
            }
            norms.push(n);
        }
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(out, Op::L2Normalize { x, norms }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.affine(s, 1.0 / n, 0.0)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Time slice `[start, start+len)` of a `(batch, time, ch)` tensor.
    pub fn slice_time(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, t, ch) = time_dims(&xs)?;
        if len == 0 || start + len > t {
            return Err(Error::dim(format!(
                "time slice {start}..{} of length {t}",
                start + len
            )));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * len * ch);
        for b in 0..batch {
            out.extend_from_slice(&xv[(b * t + start) * ch..(b * t + start + len) * ch]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![batch, len, ch], out)?,
            Op::SliceTime { x, start },
            rg,
        ))
    }

    /// Instance-wise contrastive loss averaged over all `(i, t)`.
    ///
    /// For anchor `h[i,t]` the positive is `h_alt[i,t]`; negatives are
    /// `h_alt[j,t]` for `j != i` and `h[j,t]` for `j != i`.
    pub fn instance_contrast(&mut self, h: Var, h_alt: Var) -> Result<Var> {
        let (b, t, c) = self.pair_dims(h, h_alt)?;
        let (hv, av) = (self.value(h).data(), self.value(h_alt).data());
        let idx = |i: usize, s: usize| (i * t + s) * c;
        let mut total = 0.0;
        let mut logits = Vec::with_capacity(2 * b);
        for s in 0..t {
            for i in 0..b {
                let anchor = &hv[idx(i, s)..idx(i, s) + c];
                logits.clear();
                for j in 0..b {
                    logits.push(dot(anchor, &av[idx(j, s)..idx(j, s) + c]));
                }
                for j in (0..b).filter(|&j| j != i) {
                    logits.push(dot(anchor, &hv[idx(j, s)..idx(j, s) + c]));
                }
                total += log_sum_exp(&logits) - logits[i];
            }
        }
        let rg = self.rg(&[h, h_alt]);
        Ok(self.push(
            Tensor::scalar(total / (b * t) as f64),
            Op::InstanceContrast { h, h_alt },
            rg,
        ))
    }

    /// Temporal contrastive loss averaged over all `(i, t)`.
    ///
    /// For anchor `h[i,t]` the positive is `h_alt[i,t]`; negatives are
    /// `h_alt[i,t']` and `h[i,t']` for `t' != t`.
    pub fn temporal_contrast(&mut self, h: Var, h_alt: Var) -> Result<Var> {
        let (b, t, c) = self.pair_dims(h, h_alt)?;
        let (hv, av) = (self.value(h).data(), self.value(h_alt).data());
        let idx = |i: usize, s: usize| (i * t + s) * c;
        let mut total = 0.0;
        let mut logits = Vec::with_capacity(2 * t);
        for i in 0..b {
            for s in 0..t {
                let anchor = &hv[idx(i, s)..idx(i, s) + c];
                logits.clear();
                for u in 0..t {
                    logits.push(dot(anchor, &av[idx(i, u)..idx(i, u) + c]));
                }
                for u in (0..t).filter(|&u| u != s) {
                    logits.push(dot(anchor, &hv[idx(i, u)..idx(i, u) + c]));
                }
                total += log_sum_exp(&logits) - logits[s];
            }
        }
        let rg = self.rg(&[h, h_alt]);
        Ok(self.push(
            Tensor::scalar(total / (b * t) as f64),
            Op::TemporalContrast { h, h_alt },
            rg,
        ))
    }

    fn pair_dims(&self, h: Var, h_alt: Var) -> Result<(usize, usize, usize)> {
        let (sh, sa) = (self.shape(h), self.shape(h_alt));
        if sh != sa {
            return Err(Error::dim(format!("contrasted views {sh:?} vs {sa:?}")));
        }
        time_dims(sh)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(node, &gout, &mut grads);
            }
            grads[id] = Some(gout);
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        // Keep only gradients of values that asked for them.
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], var: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let n = self.nodes[var.0].value.numel();
        let g = grads[var.0].get_or_insert_with(|| vec![0.0; n]);
        f(g);
    }

    fn propagate(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] +=
                                dot(&gout[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            axpy(
                                av[i * k + p],
                                &gout[i * n..(i + 1) * n],
                                &mut gb[p * n..(p + 1) * n],
                            );
                        }
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let ws = self.shape(*w);
                let (out_dim, in_dim) = (ws[0], ws[1]);
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let rows = xv.len() / in_dim;
                self.accumulate(grads, *x, |gx| {
                    for r in 0..rows {
                        let gr = &mut gx[r * in_dim..(r + 1) * in_dim];
                        for o in 0..out_dim {
                            axpy(gout[r * out_dim + o], &wv[o * in_dim..(o + 1) * in_dim], gr);
                        }
                    }
                });
                self.accumulate(grads, *w, |gw| {
                    for r in 0..rows {
                        let xr = &xv[r * in_dim..(r + 1) * in_dim];
                        for o in 0..out_dim {
                            axpy(
                                gout[r * out_dim + o],
                                xr,
                                &mut gw[o * in_dim..(o + 1) * in_dim],
                            );
                        }
                    }
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, |gb| {
                        for r in 0..rows {
                            axpy(1.0, &gout[r * out_dim..(r + 1) * out_dim], gb);
                        }
                    });
                }
            }
            Op::Conv1d { x, w, b, dilation } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (batch, len, cin) = (xs[0], xs[1], xs[2]);
                let (cout, width) = (ws[0], ws[1]);
                let pad = (width - 1) * dilation / 2;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let taps = |t: usize| {
                    (0..width).filter_map(move |j| {
                        let src = (t + j * dilation).checked_sub(pad)?;
                        (src < len).then_some((j, src))
                    })
                };
                self.accumulate(grads, *x, |gx| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let go = &gout[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                            for (j, src) in taps(t) {
                                let gr =
                                    &mut gx[(bi * len + src) * cin..(bi * len + src + 1) * cin];
                                for (o, &g) in go.iter().enumerate() {
                                    let off = (o * width + j) * cin;
                                    axpy(g, &wv[off..off + cin], gr);
                                }
                            }
                        }
                    }
                });
                self.accumulate(grads, *w, |gw| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let go = &gout[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                            for (j, src) in taps(t) {
                                let xr = &xv[(bi * len + src) * cin..(bi * len + src + 1) * cin];
                                for (o, &g) in go.iter().enumerate() {
                                    let off = (o * width + j) * cin;
                                    axpy(g, xr, &mut gw[off..off + cin]);
                                }
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, |gb| {
                        for row in gout.chunks_exact(cout) {
                            axpy(1.0, row, gb);
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| axpy(1.0, gout, g));
                self.accumulate(grads, *b, |g| axpy(1.0, gout, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * bv[i];
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * av[i];
                    }
                });
            }
            Op::Affine { x, scale } => {
                self.accumulate(grads, *x, |g| axpy(*scale, gout, g));
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            g[i] += gout[i];
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] += gout[i] * mask[i];
                    }
                });
            }
            Op::MaxPoolTime { x, argmax } => {
                self.accumulate(grads, *x, |g| {
                    for (o, &src) in argmax.iter().enumerate() {
                        g[src] += gout[o];
                    }
                });
            }
            Op::MeanTime(x) => {
                let (batch, len, ch) = time_dims(self.shape(*x)).expect("checked on forward");
                self.accumulate(grads, *x, |g| {
                    for b in 0..batch {
                        for t in 0..len {
                            axpy(
                                1.0 / len as f64,
                                &gout[b * ch..(b + 1) * ch],
                                &mut g[(b * len + t) * ch..(b * len + t + 1) * ch],
                            );
                        }
                    }
                });
            }
            Op::L2Normalize { x, norms } => {
                let y = node.value.data();
                let d = node.value.last_dim();
                self.accumulate(grads, *x, |g| {
                    for (r, &n) in norms.iter().enumerate() {
                        if n == 0.0 {
                            continue;
                        }
                        let yr = &y[r * d..(r + 1) * d];
                        let gr = &gout[r * d..(r + 1) * d];
                        let proj = dot(yr, gr);
                        for k in 0..d {
                            g[r * d + k] += (gr[k] - yr[k] * proj) / n;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, |g| g.iter_mut().for_each(|v| *v += gout[0]));
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, |g| axpy(1.0, gout, g));
            }
            Op::SliceTime { x, start } => {
                let (batch, t, ch) = time_dims(self.shape(*x)).expect("checked on forward");
                let len = node.value.shape()[1];
                self.accumulate(grads, *x, |g| {
                    for b in 0..batch {
                        axpy(
                            1.0,
                            &gout[b * len * ch..(b + 1) * len * ch],
                            &mut g[(b * t + start) * ch..(b * t + start + len) * ch],
                        );
                    }
                });
            }
            Op::InstanceContrast { h, h_alt } => {
                self.contrast_backward(*h, *h_alt, gout[0], ContrastAxis::Instance, grads);
            }
            Op::TemporalContrast { h, h_alt } => {
                self.contrast_backward(*h, *h_alt, gout[0], ContrastAxis::Temporal, grads);
            }
        }
    }

    fn contrast_backward(
        &self,
        h: Var,
        h_alt: Var,
        gscale: f64,
        axis: ContrastAxis,
        grads: &mut [Option<Vec<f64>>],
    ) {
        let s = self.shape(h);
        let (b, t, c) = (s[0], s[1], s[2]);
        let (hv, av) = (self.value(h).data(), self.value(h_alt).data());
        let idx = |i: usize, s: usize| (i * t + s) * c;
        let mut gh = vec![0.0; hv.len()];
        let mut ga = vec![0.0; av.len()];
        let weight = gscale / (b * t) as f64;
        let n = match axis {
            ContrastAxis::Instance => b,
            ContrastAxis::Temporal => t,
        };
        let mut logits = Vec::with_capacity(2 * n);
        for i in 0..b {
            for s in 0..t {
                let pos = match axis {
                    ContrastAxis::Instance => i,
                    ContrastAxis::Temporal => s,
                };
                let member = |m: usize| match axis {
                    ContrastAxis::Instance => idx(m, s),
                    ContrastAxis::Temporal => idx(i, m),
                };
                let a_off = idx(i, s);
                let anchor = &hv[a_off..a_off + c];
                logits.clear();
                for m in 0..n {
                    logits.push(dot(anchor, &av[member(m)..member(m) + c]));
                }
                for m in (0..n).filter(|&m| m != pos) {
                    logits.push(dot(anchor, &hv[member(m)..member(m) + c]));
                }
                let lse = log_sum_exp(&logits);
                let mut k = 0;
                for m in 0..n {
                    let mut g = (logits[k] - lse).exp();
                    if m == pos {
                        g -= 1.0;
                    }
                    g *= weight;
                    let off = member(m);
                    for q in 0..c {
                        gh[a_off + q] += g * av[off + q];
                        ga[off + q] += g * hv[a_off + q];
                    }
                    k += 1;
                }
                for m in (0..n).filter(|&m| m != pos) {
                    let g = weight * (logits[k] - lse).exp();
                    let off = member(m);
                    for q in 0..c {
                        gh[a_off + q] += g * hv[off + q];
                        gh[off + q] += g * hv[a_off + q];
                    }
                    k += 1;
                }
            }
        }
        self.accumulate(grads, h, |g| axpy(1.0, &gh, g));
        self.accumulate(grads, h_alt, |g| axpy(1.0, &ga, g));
    }
}

#[derive(Clone, Copy)]
enum ContrastAxis {
    Instance,
    Temporal,
}

fn time_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, t, c] => Ok((b, t, c)),
        _ => Err(Error::dim(format!(
            "expected (batch, time, channels), got {shape:?}"
        ))),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
