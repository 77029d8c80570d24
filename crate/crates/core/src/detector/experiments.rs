// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::evaluate::margin_f1_masked;
use super::windows::{embed_windows, DetectionTrace, EmbeddingMode, WindowPair};
use crate::data::TimeSeries;
use crate::diffcore::Tensor;
use crate::encoders::{time_slice, EncoderModel};
use crate::error::{Error, Result};
use crate::statistics::{
    cosine_distance, median_heuristic, mmd_biased, mmd_test_threshold, GaussianFit, KernelConfig,
};

/// Average similarity curve around change points.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsResult {
    /// Mean cosine similarity for each window start `0..=segment - w`.
    pub similarity: Vec<f64>,
    pub segment: usize,
    pub window: usize,
    pub used: usize,
    /// Change points too close to either end of the series.
    pub skipped: usize,
}

impl DynamicsResult {
    /// Mean similarity over windows lying entirely in the unchanged half.
    pub fn shared_mean(&self) -> f64 {
        let n = (self.segment / 2 + 1).saturating_sub(self.window);
        self.similarity[..n].iter().sum::<f64>() / n.max(1) as f64
    }

    /// Mean similarity over windows that contain the splice point.
    pub fn straddling_mean(&self) -> f64 {
        let half = self.segment / 2;
        let lo = (half + 1).saturating_sub(self.window);
        let v = &self.similarity[lo..half.min(self.similarity.len())];
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("window_start,similarity\n");
        for (i, v) in self.similarity.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }
}

/// For every change point `ν` with `segment` points before it and
/// `segment / 2` after, compares the sequence `X = x[ν - segment .. ν]` with
/// the spliced `X̂` whose second half is replaced by `x[ν .. ν + segment/2]`.
/// Window embeddings of `X[i .. i+w]` and `X̂[i .. i+w]` are compared by
/// cosine similarity, and the curves are averaged over change points.
pub fn dynamics_experiment(
    encoder: &EncoderModel,
    series: &TimeSeries,
    w: usize,
    segment: usize,
) -> Result<DynamicsResult> {
    if w == 0 || segment < 2 * w {
        return Err(Error::contract(format!(
            "segment {segment} must be at least 2w = {}",
            2 * w
        )));
    }
    let half = segment / 2;
    let t = series.len();
    let x = series.values();
    let d = series.channels();
    let mut sum = vec![0.0; segment - w + 1];
    let (mut used, mut skipped) = (0, 0);
    for &cp in series.change_points() {
        if cp < segment || cp + half > t {
            skipped += 1;
            continue;
        }
        let before = time_slice(x, cp - segment, segment)?;
        let mut spliced = before.data()[..half * d].to_vec();
        spliced.extend_from_slice(time_slice(x, cp, segment - half)?.data());
        let spliced = Tensor::new(vec![segment, d], spliced)?;
        let starts = 0..=segment - w;
        let a: Vec<Tensor> = starts
            .clone()
            .map(|i| time_slice(&before, i, w))
            .collect::<Result<_>>()?;
        let b: Vec<Tensor> = starts
            .map(|i| time_slice(&spliced, i, w))
            .collect::<Result<_>>()?;
        let ea = embed_windows(
            encoder,
            &a.iter().collect::<Vec<_>>(),
            EmbeddingMode::Vector,
        )?;
        let eb = embed_windows(
            encoder,
            &b.iter().collect::<Vec<_>>(),
            EmbeddingMode::Vector,
        )?;
        for (k, (ya, yb)) in ea.iter().zip(&eb).enumerate() {
            sum[k] += 1.0 - cosine_distance(ya.data(), yb.data());
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::contract(format!(
            "no change point has {segment} points before and {half} after it"
        )));
    }
    Ok(DynamicsResult {
        similarity: sum.into_iter().map(|s| s / used as f64).collect(),
        segment,
        window: w,
        used,
        skipped,
    })
}

/// Vector embedding of each pair's whole `2w` interval.
pub fn interval_embeddings(encoder: &EncoderModel, pairs: &[WindowPair]) -> Result<Vec<Vec<f64>>> {
    let intervals: Vec<Tensor> = pairs
        .iter()
        .map(WindowPair::interval)
        .collect::<Result<_>>()?;
    Ok(embed_windows(
        encoder,
        &intervals.iter().collect::<Vec<_>>(),
        EmbeddingMode::Vector,
    )?
    .into_iter()
    .map(Tensor::into_data)
    .collect())
}

/// One point of a rejection curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionPoint {
    pub removals: usize,
    pub kept: usize,
    pub fraction_kept: f64,
    pub f1: f64,
}

/// Fraction of the current set removed per iteration.
const REJECT_STEP: f64 = 0.05;
/// Iterations stop once at most this fraction of the samples remains.
const REJECT_FLOOR: f64 = 0.05;

/// Samples kept after one rejection step from `n`: `⌈0.95 n⌉`, but always at
/// least one fewer than `n`.
pub fn rejection_keep(n: usize) -> usize {
    ceil_tolerant(n as f64 * (1.0 - REJECT_STEP)).min(n.saturating_sub(1))
}

/// `⌈x⌉`, ignoring floating-point excess below `1e-9`.
fn ceil_tolerant(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Kept-sample counts after each removal step from `n` samples:
/// `⌈0.95^k n⌉` for `k = 1, 2, …`, decreasing by at least one per step, until
/// at most 5% of `n` (and at least one sample) remains. Rounding is applied
/// to the cumulative fraction so that it does not compound across steps.
pub fn rejection_schedule(n: usize) -> Vec<usize> {
    let floor = ((n as f64 * REJECT_FLOOR).floor() as usize).max(1);
    let mut out = Vec::new();
    let mut kept = n;
    let mut k = 1;
    while kept > floor {
        let target = ceil_tolerant(n as f64 * (1.0 - REJECT_STEP).powi(k));
        kept = target.min(kept - 1).max(floor);
        out.push(kept);
        k += 1;
    }
    out
}

/// Mahalanobis rejection curve.
///
/// A Gaussian is fitted to `fit_embeddings`. Test samples are scored by
/// their Mahalanobis distance to it; repeatedly the most distant 5% of the
/// remaining samples are discarded (see [`rejection_schedule`]) and margin
/// F1 is recomputed on what is left, at the trace's fixed threshold, until
/// at most 5% of the samples remain. One point is emitted per removal step.
pub fn rejection_curve(
    fit_embeddings: &[Vec<f64>],
    test_embeddings: &[Vec<f64>],
    trace: &DetectionTrace,
    cps: &[usize],
    margin: usize,
) -> Result<Vec<RejectionPoint>> {
    let n = test_embeddings.len();
    if n < 20 {
        return Err(Error::contract(format!(
            "rejection curve needs at least 20 test samples, got {n}"
        )));
    }
    if trace.len() != n {
        return Err(Error::dim("trace and test embeddings differ in length"));
    }
    let fit = GaussianFit::fit(fit_embeddings)?;
    let scores: Vec<f64> = test_embeddings.iter().map(|y| fit.score(y)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Most distant first; ties broken by position for determinism.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut keep = vec![true; n];
    let mut removed = 0;
    let mut points = Vec::new();
    for kept in rejection_schedule(n) {
        for &k in &order[removed..n - kept] {
            keep[k] = false;
        }
        removed = n - kept;
        let r = margin_f1_masked(&trace.indices, &trace.alarms, &keep, cps, margin)?;
        points.push(RejectionPoint {
            removals: points.len() + 1,
            kept,
            fraction_kept: kept as f64 / n as f64,
            f1: r.f1,
        });
    }
    Ok(points)
}

pub fn rejection_csv(points: &[RejectionPoint]) -> String {
    let mut s = String::from("removals,kept,fraction_kept,f1\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            p.removals, p.kept, p.fraction_kept, p.f1
        ));
    }
    s
}

/// Monte-Carlo settings of the two-sample power study.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Test level.
    pub alpha: f64,
    /// Mean shift of the alternative along every coordinate, divided by
    /// `sqrt(D)` so that the shift vector has norm `delta`.
    pub delta: f64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            sizes: vec![25, 50, 100, 200],
            trials: 200,
            alpha: 0.05,
            delta: 1.0,
            seed: 0,
        }
    }
}

/// Error rates at one sample size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerRow {
    pub n: usize,
    /// Fraction of alternative trials that failed to reject.
    pub raw_type2: f64,
    pub embedded_type2: f64,
    /// Fraction of null trials that rejected.
    pub raw_type1: f64,
    pub embedded_type1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerResult {
    pub rows: Vec<PowerRow>,
    pub trials: usize,
    pub alpha: f64,
    pub raw_sigma: f64,
    pub embedded_sigma: f64,
}

/// `ln((k + 0.5) / (trials + 1))`: a log error rate that stays finite when no
/// trial errs.
fn smoothed_log_rate(rate: f64, trials: usize) -> f64 {
    ((rate * trials as f64 + 0.5) / (trials as f64 + 1.0)).ln()
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

impl PowerResult {
    /// Least-squares slopes of log type-II error against log n, `(raw, embedded)`.
    pub fn log_log_slopes(&self) -> (f64, f64) {
        let x: Vec<f64> = self.rows.iter().map(|r| (r.n as f64).ln()).collect();
        let raw: Vec<f64> = self
            .rows
            .iter()
            .map(|r| smoothed_log_rate(r.raw_type2, self.trials))
            .collect();
        let emb: Vec<f64> = self
            .rows
            .iter()
            .map(|r| smoothed_log_rate(r.embedded_type2, self.trials))
            .collect();
        (ls_slope(&x, &raw), ls_slope(&x, &emb))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,raw_type2,embedded_type2,raw_type1,embedded_type1\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n, r.raw_type2, r.embedded_type2, r.raw_type1, r.embedded_type1
            ));
        }
        s
    }
}

fn gaussian_sample(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..n * d)
        .map(|_| shift + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    Tensor::new(vec![n, d], data).expect("n, d >= 1")
}

/// Embeds each row as a length-one window.
fn embed_points(encoder: &EncoderModel, x: &Tensor) -> Result<Tensor> {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let y = encoder.encode_vector(&x.reshape(&[n, 1, d])?)?;
    Ok(y)
}

fn rows_of(t: &Tensor) -> Vec<&[f64]> {
    t.rows().collect()
}

/// Two-sample MMD tests in the observation space and in the encoder's
/// embedding space.
///
/// Under the alternative the samples come from `N(0, I)` and
/// `N(μ, I)` with `‖μ‖ = delta`; under the null both come from `N(0, I)`.
/// The test rejects when `sqrt(MMD²_b)` exceeds the distribution-free
/// acceptance boundary for the RBF kernel (`K = 1`). Bandwidths come from
/// the median heuristic on one pooled calibration draw per space.
pub fn mmd_power_experiment(encoder: &EncoderModel, cfg: &PowerConfig) -> Result<PowerResult> {
    if cfg.sizes.is_empty() || cfg.trials == 0 {
        return Err(Error::config("power study needs sizes and trials"));
    }
    let d = encoder.input_dim();
    let shift = cfg.delta / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let calib_n = 200;
    let mut calib = gaussian_sample(calib_n, d, 0.0, &mut rng).into_data();
    calib.extend(gaussian_sample(calib_n, d, shift, &mut rng).into_data());
    let calib = Tensor::new(vec![2 * calib_n, d], calib)?;
    let raw_sigma = median_heuristic(&rows_of(&calib))?;
    let calib_emb = embed_points(encoder, &calib)?;
    let embedded_sigma = median_heuristic(&rows_of(&calib_emb))?;
    let raw_k = KernelConfig::rbf(raw_sigma)?;
    let emb_k = KernelConfig::rbf(embedded_sigma)?;

    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let thr = mmd_test_threshold(n, raw_k.bound(), cfg.alpha)?;
        let mut counts = [0usize; 4];
        for _ in 0..cfg.trials {
            for (null, base) in [(false, 0), (true, 2)] {
                let a = gaussian_sample(n, d, 0.0, &mut rng);
                let b = gaussian_sample(n, d, if null { 0.0 } else { shift }, &mut rng);
                let raw = mmd_biased(&a, &b, &raw_k)?.sqrt() > thr;
                let emb = mmd_biased(
                    &embed_points(encoder, &a)?,
                    &embed_points(encoder, &b)?,
                    &emb_k,
                )?
                .sqrt()
                    > thr;
                // Alternative counts misses, null counts rejections.
                counts[base] += usize::from(raw == null);
                counts[base + 1] += usize::from(emb == null);
            }
        }
        let f = |c: usize| c as f64 / cfg.trials as f64;
        rows.push(PowerRow {
            n,
            raw_type2: f(counts[0]),
            embedded_type2: f(counts[1]),
            raw_type1: f(counts[2]),
            embedded_type1: f(counts[3]),
        });
    }
    Ok(PowerResult {
        rows,
        trials: cfg.trials,
        alpha: cfg.alpha,
        raw_sigma,
        embedded_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_counts() {
        assert_eq!(rejection_keep(100), 95);
        assert_eq!(rejection_keep(19), 18);
        assert_eq!(rejection_keep(1), 0);
    }

    #[test]
    fn schedule_length() {
        // ⌈ln 0.05 / ln 0.95⌉ = 59 steps for sizes where rounding does not bite.
        assert_eq!(rejection_schedule(901).len(), 59);
        assert_eq!(rejection_schedule(1000).len(), 59);
        assert_eq!(rejection_schedule(100)[..3], [95, 91, 86]);
        let s = rejection_schedule(20);
        assert_eq!(*s.last().unwrap(), 1);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 0.5, 0.25].iter().map(|v| v.ln()).collect();
        assert!((ls_slope(&x, &y) + 1.0).abs() < 1e-12);
    }
}
