// SPDX-License-Identifier: MIT OR Apache-2.0

use super::windows::DetectionTrace;
use crate::error::{Error, Result};

/// Detection quality at one margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1Report {
    pub margin: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Change points with no scored split index within the margin. They
    /// cannot be detected by any threshold and are left out of the counts.
    pub uncovered: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Margin F1 over the scored samples selected by `keep`.
///
/// A change point `ν` is detected when some kept alarm lies in
/// `[ν - margin, ν + margin]`; each change point counts at most once.
/// Alarms matched to no change point are false positives, and a run of
/// them at consecutive kept samples counts once. Change points with no kept
/// sample in their margin window are excluded.
pub fn margin_f1_masked(
    indices: &[usize],
    alarms: &[bool],
    keep: &[bool],
    cps: &[usize],
    margin: usize,
) -> Result<F1Report> {
    if indices.len() != alarms.len() || indices.len() != keep.len() {
        return Err(Error::dim("indices, alarms and mask differ in length"));
    }
    let kept: Vec<usize> = (0..indices.len()).filter(|&k| keep[k]).collect();
    let near = |i: usize, c: usize| i.abs_diff(c) <= margin;

    let mut tp = 0;
    let mut uncovered = 0;
    for &c in cps {
        if !kept.iter().any(|&k| near(indices[k], c)) {
            uncovered += 1;
        } else if kept.iter().any(|&k| alarms[k] && near(indices[k], c)) {
            tp += 1;
        }
    }
    let covered = cps.len() - uncovered;

    // Unmatched alarms at consecutive kept samples form one false positive.
    let mut fp = 0;
    let mut in_run = false;
    for &k in &kept {
        let unmatched = alarms[k] && !cps.iter().any(|&c| near(indices[k], c));
        if unmatched && !in_run {
            fp += 1;
        }
        in_run = unmatched;
    }

    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, covered);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(F1Report {
        margin,
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: covered - tp,
        uncovered,
    })
}

/// [`margin_f1_masked`] over every sample of the trace.
pub fn margin_f1(trace: &DetectionTrace, cps: &[usize], margin: usize) -> Result<F1Report> {
    if margin == 0 {
        return Err(Error::contract("margin must be positive"));
    }
    margin_f1_masked(
        &trace.indices,
        &trace.alarms,
        &vec![true; trace.len()],
        cps,
        margin,
    )
}

/// Result of a validation threshold search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepResult {
    pub threshold: f64,
    pub report: F1Report,
}

/// Picks the threshold maximizing margin F1 on a labeled trace.
///
/// Candidates are the sorted unique statistic values `u_1 < … < u_k`, with
/// candidate `u_j` raising alarms where the statistic exceeds `u_j`. Let
/// `u_a..=u_b` be the run of consecutive optimal candidates starting at the
/// smallest one; every threshold in `[u_a, u_{b+1})` raises the same alarms.
/// The threshold is the geometric midpoint `sqrt(u_a * u_{b+1})` of that
/// interval, or the arithmetic one when `u_a <= 0`. When `b = k` it is
/// placed just above the maximum.
pub fn threshold_sweep(
    trace: &DetectionTrace,
    cps: &[usize],
    margin: usize,
) -> Result<SweepResult> {
    if cps.is_empty() {
        return Err(Error::contract(
            "threshold sweep needs at least one labeled change point",
        ));
    }
    if trace.is_empty() {
        return Err(Error::contract("threshold sweep needs a nonempty trace"));
    }
    if trace.statistics.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("trace has non-finite statistics".into()));
    }
    let mut grid = trace.statistics.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let scores: Vec<f64> = grid
        .iter()
        .map(|&u| {
            let alarms: Vec<bool> = trace.statistics.iter().map(|&s| s > u).collect();
            let keep = vec![true; alarms.len()];
            margin_f1_masked(&trace.indices, &alarms, &keep, cps, margin).map(|r| r.f1)
        })
        .collect::<Result<_>>()?;
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a = scores
        .iter()
        .position(|&f| f == best)
        .expect("nonempty grid");
    let b = a + scores[a..].iter().take_while(|&&f| f == best).count() - 1;
    let threshold = match grid.get(b + 1) {
        Some(&upper) if grid[a] > 0.0 => (grid[a] * upper).sqrt(),
        Some(&upper) => 0.5 * (grid[a] + upper),
        None => {
            let top = grid[grid.len() - 1];
            top + 1e-9 * top.abs().max(1.0)
        }
    };
    let tuned = trace.clone().with_threshold(threshold);
    Ok(SweepResult {
        threshold,
        report: margin_f1(&tuned, cps, margin)?,
    })
}
