// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;

use rand::Rng;

use crate::diffcore::Tensor;
use crate::encoders::EncoderModel;
use crate::error::{Error, Result};

/// Relative slack allowed on a block's operator-norm bound before it counts
/// as exceeding the cap.
pub const CAP_SLACK: f64 = 1e-4;

/// Empirical bi-Lipschitz and kernel-distance check of the residual stack `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    /// Configured per-block cap `c`, used as the Lipschitz constant of every branch.
    pub cap: f64,
    /// Largest measured per-block operator-norm bound.
    pub alpha: f64,
    pub layer_norms: Vec<f64>,
    pub depth: usize,
    /// `(1 - cap)^L`.
    pub l1: f64,
    /// `(1 + cap)^L`.
    pub l2: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// RBF bandwidth used for the kernel check.
    pub sigma: f64,
    pub kernel_ratio_min: f64,
    pub kernel_ratio_max: f64,
    /// Analytic kernel-ratio band implied by `l1`, `l2` on the unit sphere.
    pub kernel_lower: f64,
    pub kernel_upper: f64,
    pub n_pairs: usize,
    /// Identical pairs that were dropped.
    pub skipped: usize,
    pub cap_violations: usize,
    pub ratio_violations: usize,
    pub kernel_violations: usize,
}

impl CertificationReport {
    /// Bi-Lipschitz certification outcome.
    pub fn passes(&self) -> bool {
        self.cap_violations == 0 && self.ratio_violations == 0
    }

    pub fn kernel_passes(&self) -> bool {
        self.kernel_violations == 0
    }

    /// Flat `key=value` record, one entry per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let norms: Vec<String> = self
            .layer_norms
            .iter()
            .map(|v| format!("{v:.12e}"))
            .collect();
        let _ = writeln!(s, "bilipschitz_pass={}", self.passes());
        let _ = writeln!(s, "kernel_pass={}", self.kernel_passes());
        for (k, v) in [
            ("cap", self.cap),
            ("alpha", self.alpha),
            ("l1", self.l1),
            ("l2", self.l2),
            ("ratio_min", self.ratio_min),
            ("ratio_max", self.ratio_max),
            ("sigma", self.sigma),
            ("kernel_ratio_min", self.kernel_ratio_min),
            ("kernel_ratio_max", self.kernel_ratio_max),
            ("kernel_lower", self.kernel_lower),
            ("kernel_upper", self.kernel_upper),
        ] {
            let _ = writeln!(s, "{k}={v:.12e}");
        }
        for (k, v) in [
            ("depth", self.depth),
            ("n_pairs", self.n_pairs),
            ("skipped", self.skipped),
            ("cap_violations", self.cap_violations),
            ("ratio_violations", self.ratio_violations),
            ("kernel_violations", self.kernel_violations),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "layer_norms={}", norms.join(","));
        s
    }

    /// Parses the output of [`to_kv`](Self::to_kv).
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| {
            map.get(k).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing key '{k}'"),
            })
        };
        let float = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("'{k}' is not a number"),
            })
        };
        let int = |k: &str| -> Result<usize> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("'{k}' is not an integer"),
            })
        };
        let (norm_line, norms) = get("layer_norms")?;
        let layer_norms = if norms.is_empty() {
            Vec::new()
        } else {
            norms
                .split(',')
                .map(|v| {
                    v.parse().map_err(|_| Error::Parse {
                        line: *norm_line,
                        message: format!("bad layer norm '{v}'"),
                    })
                })
                .collect::<Result<_>>()?
        };
        Ok(Self {
            cap: float("cap")?,
            alpha: float("alpha")?,
            layer_norms,
            depth: int("depth")?,
            l1: float("l1")?,
            l2: float("l2")?,
            ratio_min: float("ratio_min")?,
            ratio_max: float("ratio_max")?,
            sigma: float("sigma")?,
            kernel_ratio_min: float("kernel_ratio_min")?,
            kernel_ratio_max: float("kernel_ratio_max")?,
            kernel_lower: float("kernel_lower")?,
            kernel_upper: float("kernel_upper")?,
            n_pairs: int("n_pairs")?,
            skipped: int("skipped")?,
            cap_violations: int("cap_violations")?,
            ratio_violations: int("ratio_violations")?,
            kernel_violations: int("kernel_violations")?,
        })
    }
}

/// `n` pairs of independent uniform points on the unit sphere of tensors
/// with the given shape (Frobenius norm one).
pub fn sample_sphere_pairs<R: Rng + ?Sized>(
    n: usize,
    shape: &[usize],
    rng: &mut R,
) -> Vec<(Tensor, Tensor)> {
    let mut point = || loop {
        let mut t = Tensor::randn(shape, 1.0, rng);
        let norm = t.norm();
        if norm > 1e-12 {
            t.scale_in_place(1.0 / norm);
            return t;
        }
    };
    (0..n).map(|_| (point(), point())).collect()
}

/// Median of a non-empty slice.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Measures `‖h(X) - h(X')‖ / ‖X - X'‖` over `pairs` of `(time, hidden)`
/// inputs to the residual stack and compares the extrema with the band
/// `[(1 - cap)^L, (1 + cap)^L]`.
///
/// Each block's operator-norm bound is also measured with `norm_iterations`
/// power iterations; a bound above `cap * (1 + CAP_SLACK)` is a violation,
/// since the band is then no longer guaranteed.
///
/// The kernel check uses the RBF kernel with the median pair distance as
/// bandwidth. For inputs on the unit sphere `‖X - X'‖ <= 2`, so the kernel
/// ratio `k(h(X), h(X')) / k(X, X')` must lie in
/// `[exp(-2 (L2² - 1) / σ²), exp(2 (1 - L1²) / σ²)]`.
pub fn certify_bilipschitz(
    model: &EncoderModel,
    pairs: &[(Tensor, Tensor)],
    cap: f64,
    norm_iterations: usize,
) -> Result<CertificationReport> {
    if !(cap > 0.0) {
        return Err(Error::contract("certification cap must be positive"));
    }
    let hidden = model.hidden_dim();
    let mut probe = model.clone();
    let layer_norms = probe.layer_norms(norm_iterations);
    let alpha = layer_norms.iter().copied().fold(0.0, f64::max);
    let cap_violations = layer_norms
        .iter()
        .filter(|&&n| n > cap * (1.0 + CAP_SLACK))
        .count();

    let mut input_dist = Vec::with_capacity(pairs.len());
    let mut output_dist = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for (a, b) in pairs {
        if a.shape() != b.shape() || a.ndim() != 2 || a.shape()[1] != hidden {
            return Err(Error::dim(format!(
                "certification pairs must be (time, {hidden}), got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let dx = a.distance(b);
        if dx == 0.0 {
            skipped += 1;
            continue;
        }
        let (t, h) = (a.shape()[0], a.shape()[1]);
        let ya = model.apply_hidden(&a.reshape(&[1, t, h])?)?;
        let yb = model.apply_hidden(&b.reshape(&[1, t, h])?)?;
        input_dist.push(dx);
        output_dist.push(ya.distance(&yb));
    }
    if input_dist.is_empty() {
        return Err(Error::contract("no distinct pairs to certify"));
    }

    let depth = model.depth() as i32;
    let l1 = (1.0 - cap).max(0.0).powi(depth);
    let l2 = (1.0 + cap).powi(depth);
    let ratios: Vec<f64> = input_dist
        .iter()
        .zip(&output_dist)
        .map(|(dx, dy)| dy / dx)
        .collect();
    let ratio_violations = ratios.iter().filter(|&&r| r < l1 || r > l2).count();

    let sigma = median(&mut input_dist.clone());
    let s2 = sigma * sigma;
    let kernel_ratios: Vec<f64> = input_dist
        .iter()
        .zip(&output_dist)
        .map(|(dx, dy)| (-(dy * dy - dx * dx) / (2.0 * s2)).exp())
        .collect();
    let kernel_lower = (-2.0 * (l2 * l2 - 1.0) / s2).exp();
    let kernel_upper = (2.0 * (1.0 - l1 * l1) / s2).exp();
    let kernel_violations = kernel_ratios
        .iter()
        .filter(|&&k| k < kernel_lower || k > kernel_upper)
        .count();

    let extrema = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (ratio_min, ratio_max) = extrema(&ratios);
    let (kernel_ratio_min, kernel_ratio_max) = extrema(&kernel_ratios);

    Ok(CertificationReport {
        cap,
        alpha,
        layer_norms,
        depth: model.depth(),
        l1,
        l2,
        ratio_min,
        ratio_max,
        sigma,
        kernel_ratio_min,
        kernel_ratio_max,
        kernel_lower,
        kernel_upper,
        n_pairs: ratios.len(),
        skipped,
        cap_violations,
        ratio_violations,
        kernel_violations,
    })
}
