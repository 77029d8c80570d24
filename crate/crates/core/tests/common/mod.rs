// SPDX-License-Identifier: MIT OR Apache-2.0

//! Helpers shared by the integration tests.

#![allow(dead_code)]

pub mod oracles;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sncpd::diffcore::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut rng(seed))
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Evaluates `f` on fresh parameters and reduces a non-scalar output to a
/// scalar by a fixed random weighting, so every output entry is exercised.
fn scalar_loss<F>(f: &F, inputs: &[Tensor]) -> (Tape, Vec<Var>, Var)
where
    F: Fn(&mut Tape, &[Var]) -> sncpd::Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars).expect("forward pass");
    let loss = if tape.value(out).numel() == 1 {
        out
    } else {
        let weights = randn(tape.shape(out), 0xfeed);
        let w = tape.constant(weights);
        let prod = tape.mul(out, w).expect("same shape");
        tape.sum(prod)
    };
    (tape, vars, loss)
}

/// Worst relative error between tape gradients and central differences,
/// taken per input as `max|a - n| / max(max|a|, max|n|)`.
pub fn gradient_error<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> sncpd::Result<Var>,
{
    let h = 1e-5;
    let (tape, vars, loss) = scalar_loss(&f, inputs);
    let grads = tape.backward(loss).expect("backward");
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[k]);
        let mut numeric = vec![0.0; input.numel()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let eval = |delta: f64| {
                let mut moved = inputs.to_vec();
                moved[k].data_mut()[i] += delta;
                let (t, _, l) = scalar_loss(&f, &moved);
                t.value(l).item()
            };
            *slot = (eval(h) - eval(-h)) / (2.0 * h);
        }
        let scale = inf_norm(analytic.data()).max(inf_norm(&numeric));
        if scale < 1e-10 {
            continue;
        }
        worst = worst.max(max_abs_diff(analytic.data(), &numeric) / scale);
    }
    worst
}
