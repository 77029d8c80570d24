// SPDX-License-Identifier: MIT OR Apache-2.0

use super::kernel::{sq_dist, KernelConfig, KernelKind};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Biased squared MMD between two equally sized samples given as the rows
/// of `(m, dim)` tensors. Diagonal kernel terms are included.
pub fn mmd_biased(z: &Tensor, xi: &Tensor, kernel: &KernelConfig) -> Result<f64> {
    if z.ndim() != 2 || xi.ndim() != 2 {
        return Err(Error::dim("MMD samples must be (points, dim) matrices"));
    }
    let (m, dim) = (z.shape()[0], z.shape()[1]);
    if xi.shape() != z.shape() {
        return Err(Error::contract(format!(
            "MMD needs equal-size samples of equal dimension, got {:?} and {:?}",
            z.shape(),
            xi.shape()
        )));
    }
    let a = z.data();
    let b = xi.data();
    let KernelKind::Rbf = kernel.kind;
    let gamma = 1.0 / (2.0 * kernel.sigma * kernel.sigma);
    fn row(d: &[f64], i: usize, dim: usize) -> &[f64] {
        &d[i * dim..(i + 1) * dim]
    }
    let k = |x: &[f64], y: &[f64]| (-gamma * sq_dist(x, y)).exp();

    // Within-sample sums use symmetry; the RBF diagonal is exactly one.
    let within = |d: &[f64]| {
        let mut s = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                s += k(row(d, i, dim), row(d, j, dim));
            }
        }
        2.0 * s + m as f64
    };
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..m {
            cross += k(row(a, i, dim), row(b, j, dim));
        }
    }
    let m2 = (m * m) as f64;
    Ok(((within(a) + within(b) - 2.0 * cross) / m2).max(0.0))
}

/// Acceptance-region boundary of the level-`alpha` test on `MMD_b`
/// (the square root of [`mmd_biased`]) for samples of size `m` and a kernel
/// bounded by `k_bound`: `sqrt(2K/m) (1 + sqrt(2 ln(1/alpha)))`.
pub fn mmd_test_threshold(m: usize, k_bound: f64, alpha: f64) -> Result<f64> {
    if m == 0 || !(k_bound > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::contract(format!(
            "threshold needs m >= 1, K > 0, alpha in (0, 1); got m={m}, K={k_bound}, alpha={alpha}"
        )));
    }
    Ok((2.0 * k_bound / m as f64).sqrt() * (1.0 + (2.0 * (1.0 / alpha).ln()).sqrt()))
}
