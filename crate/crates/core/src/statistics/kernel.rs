// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};

/// Kernel families. Only the Gaussian RBF is provided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Rbf,
}

/// Bandwidth and bound of a kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl KernelConfig {
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!(
                "kernel bandwidth must be > 0, got {sigma}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Rbf,
            sigma,
        })
    }

    /// Supremum `K` of the kernel.
    pub fn bound(&self) -> f64 {
        match self.kind {
            KernelKind::Rbf => 1.0,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Rbf => rbf_kernel(x, y, self.sigma),
        }
    }
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-‖x - y‖² / 2σ²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp()
}

/// Median pairwise Euclidean distance over all distinct pairs of `points`,
/// the usual bandwidth heuristic. Falls back to `1` when every pair
/// coincides.
pub fn median_heuristic(points: &[&[f64]]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::contract(
            "median heuristic needs at least two points",
        ));
    }
    let mut d = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(points[i], points[j]).sqrt());
        }
    }
    let m = crate::specnorm::median(&mut d);
    Ok(if m > 0.0 { m } else { 1.0 })
}

/// `1 - ⟨y, y'⟩ / (‖y‖ ‖y'‖)`. A zero vector is treated as having unit
/// norm, which yields distance `1` against anything.
pub fn cosine_distance(y: &[f64], y2: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), y2.len());
    const EPS: f64 = 1e-12;
    let dot: f64 = y.iter().zip(y2).map(|(a, b)| a * b).sum();
    let na = y.iter().map(|a| a * a).sum::<f64>().sqrt().max(EPS);
    let nb = y2.iter().map(|a| a * a).sum::<f64>().sqrt().max(EPS);
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}
