// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Instance-wise contrastive loss between two `(batch, time, d)` views,
/// averaged over batch entries and timestamps.
pub fn ts2vec_instance_loss(tape: &mut Tape, h: Var, h_alt: Var) -> Result<Var> {
    tape.instance_contrast(h, h_alt)
}

/// Temporal contrastive loss between two `(batch, time, d)` views restricted
/// to their overlap, averaged over batch entries and timestamps.
pub fn ts2vec_temporal_loss(tape: &mut Tape, h: Var, h_alt: Var) -> Result<Var> {
    tape.temporal_contrast(h, h_alt)
}

/// Number of pooling levels visited for an overlap of `len` timestamps.
pub fn hierarchy_levels(len: usize) -> usize {
    let mut t = len;
    let mut levels = 1;
    while t > 1 {
        t /= 2;
        levels += 1;
    }
    levels
}

/// Hierarchical contrastive loss.
///
/// At every level with more than one timestamp the term is the mean of the
/// instance and temporal losses; the views are then max-pooled by two along
/// time. The single-timestamp level contributes half the instance loss. The
/// sum is divided by the number of levels.
pub fn ts2vec_hierarchical_loss(tape: &mut Tape, h: Var, h_alt: Var) -> Result<Var> {
    let shape = tape.shape(h).to_vec();
    if shape.len() != 3 || tape.shape(h_alt) != shape.as_slice() {
        return Err(Error::dim(format!(
            "hierarchical loss needs equal (batch, time, d) views, got {shape:?} and {:?}",
            tape.shape(h_alt)
        )));
    }
    let (mut a, mut b) = (h, h_alt);
    let mut terms = Vec::new();
    while tape.shape(a)[1] > 1 {
        let inst = tape.instance_contrast(a, b)?;
        let temp = tape.temporal_contrast(a, b)?;
        let both = tape.add(inst, temp)?;
        terms.push(tape.affine(both, 0.5, 0.0));
        a = tape.max_pool_time(a, 2)?;
        b = tape.max_pool_time(b, 2)?;
    }
    let inst = tape.instance_contrast(a, b)?;
    terms.push(tape.affine(inst, 0.5, 0.0));
    let n = terms.len() as f64;
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(tape.affine(total, 1.0 / n, 0.0))
}

/// `2 - 2 cos(h1, h2)` averaged over the rows of two `(batch, d)` tensors.
pub fn byol_loss(tape: &mut Tape, h1: Var, h2: Var) -> Result<Var> {
    let s1 = tape.shape(h1).to_vec();
    if s1.len() != 2 || tape.shape(h2) != s1.as_slice() {
        return Err(Error::dim(format!(
            "BYOL loss needs equal (batch, d) inputs, got {s1:?} and {:?}",
            tape.shape(h2)
        )));
    }
    let n1 = tape.l2_normalize(h1);
    let n2 = tape.l2_normalize(h2);
    let prod = tape.mul(n1, n2)?;
    let cos_sum = tape.sum(prod);
    Ok(tape.affine(cos_sum, -2.0 / s1[0] as f64, 2.0))
}

/// `ξ <- β ξ + (1 - β) θ`, elementwise over matching tensors.
pub fn ema_update(target: &mut [&mut Tensor], online: &[&Tensor], beta: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::dim(
            "EMA target and online parameter lists differ in length",
        ));
    }
    for (xi, theta) in target.iter_mut().zip(online) {
        if xi.shape() != theta.shape() {
            return Err(Error::dim(format!(
                "EMA shape mismatch {:?} vs {:?}",
                xi.shape(),
                theta.shape()
            )));
        }
        for (x, &t) in xi.data_mut().iter_mut().zip(theta.data()) {
            *x = beta * *x + (1.0 - beta) * t;
        }
    }
    Ok(())
}
