// SPDX-License-Identifier: MIT OR Apache-2.0

//! Spectral-norm estimation by power iteration, the norm-capping projection,
//! bi-Lipschitz certification and fixed-point inversion of residual blocks.

mod certify;
mod invert;

pub(crate) use certify::median;
pub use certify::{certify_bilipschitz, sample_sphere_pairs, CertificationReport};
pub use invert::{invert_hidden, invert_residual_block, InversionStats};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffcore::{dot, Tensor};
use crate::error::{Error, Result};

/// Hyperparameters of the spectral-norm projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SNConfig {
    /// Norm cap `c`. Residual blocks are invertible only for `c < 1`.
    pub c: f64,
    /// Power iterations per training step (warm-started).
    pub iterations_per_step: usize,
    /// Power iterations used by certification.
    pub certify_iterations: usize,
    pub invert_max_iter: usize,
    pub invert_tol: f64,
}

impl Default for SNConfig {
    fn default() -> Self {
        Self {
            c: 0.9,
            iterations_per_step: 1,
            certify_iterations: 50,
            invert_max_iter: 200,
            invert_tol: 1e-8,
        }
    }
}

impl SNConfig {
    pub fn with_cap(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!(
                "spectral cap c must be > 0, got {}",
                self.c
            )));
        }
        if self.iterations_per_step == 0 || self.certify_iterations == 0 {
            return Err(Error::config("power iteration counts must be >= 1"));
        }
        if self.invert_max_iter == 0 || !(self.invert_tol > 0.0) {
            return Err(Error::config("inversion needs max_iter >= 1 and tol > 0"));
        }
        Ok(())
    }
}

/// Persistent singular-vector estimates for one weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralNormState {
    u: Vec<f64>,
    v: Vec<f64>,
    last_estimate: f64,
}

impl SpectralNormState {
    /// Random unit start vectors for a `rows x cols` matrix.
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self {
            u: random_unit(rows, rng),
            v: random_unit(cols, rng),
            last_estimate: 0.0,
        }
    }

    pub(crate) fn from_parts(u: Vec<f64>, v: Vec<f64>, last_estimate: f64) -> Self {
        Self {
            u,
            v,
            last_estimate,
        }
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn last_estimate(&self) -> f64 {
        self.last_estimate
    }
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Views a weight tensor as a matrix: the first axis is the row index and
/// every remaining axis is flattened into columns. A `(out, width, in)`
/// convolution kernel becomes `out x (width*in)`.
pub fn matrix_dims(w: &Tensor) -> (usize, usize) {
    let rows = w.shape()[0];
    (rows, w.numel() / rows)
}

/// Power-iteration estimate of the largest singular value of `w`.
///
/// The state's `u` and `v` are updated in place so the next call starts
/// from the previous estimate. A zero matrix yields `0` and leaves the state
/// untouched.
pub fn estimate_spectral_norm(w: &Tensor, state: &mut SpectralNormState, iterations: usize) -> f64 {
    let (rows, cols) = matrix_dims(w);
    let data = w.data();
    assert_eq!(state.u.len(), rows, "state rows do not match weight");
    assert_eq!(state.v.len(), cols, "state cols do not match weight");
    if data.iter().all(|&x| x == 0.0) {
        state.last_estimate = 0.0;
        return 0.0;
    }
    let mut wt_u = vec![0.0; cols];
    let mut w_v = vec![0.0; rows];
    let mut sigma = 0.0;
    for _ in 0..iterations.max(1) {
        wt_u.iter_mut().for_each(|x| *x = 0.0);
        for (r, &ur) in state.u.iter().enumerate() {
            for (acc, &x) in wt_u.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
                *acc += ur * x;
            }
        }
        let nv = dot(&wt_u, &wt_u).sqrt();
        if nv == 0.0 {
            // u is orthogonal to the range of w; restart from the heaviest column.
            let j = (0..cols)
                .max_by(|&a, &b| {
                    let ca: f64 = (0..rows).map(|r| data[r * cols + a].powi(2)).sum();
                    let cb: f64 = (0..rows).map(|r| data[r * cols + b].powi(2)).sum();
                    ca.total_cmp(&cb)
                })
                .unwrap_or(0);
            state.v.iter_mut().for_each(|x| *x = 0.0);
            state.v[j] = 1.0;
        } else {
            for (v, x) in state.v.iter_mut().zip(&wt_u) {
                *v = x / nv;
            }
        }
        for (r, acc) in w_v.iter_mut().enumerate() {
            *acc = dot(&data[r * cols..(r + 1) * cols], &state.v);
        }
        let nu = dot(&w_v, &w_v).sqrt();
        sigma = nu;
        if nu > 0.0 {
            for (u, x) in state.u.iter_mut().zip(&w_v) {
                *u = x / nu;
            }
        }
    }
    state.last_estimate = sigma;
    sigma
}

/// Caps the spectral norm of `w` at `c`: `w <- c * w / σ̂` when `σ̂ > c`.
///
/// Returns the estimate taken before any rescaling.
pub fn project_spectral_norm(
    w: &mut Tensor,
    c: f64,
    state: &mut SpectralNormState,
    iterations: usize,
) -> f64 {
    assert!(c > 0.0, "spectral cap must be positive");
    let sigma = estimate_spectral_norm(w, state, iterations);
    if sigma > c {
        w.scale_in_place(c / sigma);
        state.last_estimate = c;
    }
    sigma
}

/// Factor by which the operator norm of a convolution can exceed the
/// spectral norm of its reshaped kernel: each input timestamp feeds at most
/// `width` outputs, so `‖conv‖ <= sqrt(width) * ‖reshape(W)‖`.
pub fn conv_norm_factor(width: usize) -> f64 {
    (width as f64).sqrt()
}
