// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::series::{CpLabels, TimeSeries};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Per-channel segment means. Every channel starts at zero and moves by
/// exactly `delta` at each change point along a random walk reflected
/// inside `{-delta, 0, delta}`, so means stay bounded however many change
/// points there are.
fn mean_path<R: Rng + ?Sized>(
    d: usize,
    n_segments: usize,
    delta: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut level = vec![0i8; d];
    let mut out = vec![vec![0.0; d]];
    for _ in 1..n_segments {
        for l in level.iter_mut() {
            *l = match *l {
                0 => {
                    if rng.random::<bool>() {
                        1
                    } else {
                        -1
                    }
                }
                _ => 0,
            };
        }
        out.push(level.iter().map(|&l| f64::from(l) * delta).collect());
    }
    out
}

fn segment_of(cps: &[usize], i: usize) -> usize {
    cps.partition_point(|&c| c <= i)
}

/// I.i.d. unit-variance Gaussian observations whose mean shifts at each
/// change point; every channel's mean moves by `delta` at every change.
pub fn gen_gaussian_mean_shift(
    d: usize,
    t: usize,
    cps: &[usize],
    delta: f64,
    seed: u64,
) -> Result<TimeSeries> {
    gen_elliptical(d, t, cps, EllipticalFamily::Gaussian, delta, 1.0, seed)
}

/// Elliptical observation laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EllipticalFamily {
    Gaussian,
    /// Multivariate Student-t with `dof > 2` degrees of freedom, scaled to
    /// unit marginal variance.
    StudentT {
        dof: f64,
    },
}

/// Piecewise-stationary elliptical series. At each change point the mean
/// moves as in [`gen_gaussian_mean_shift`] and the scale alternates between
/// `1` and `scale_shift`.
pub fn gen_elliptical(
    d: usize,
    t: usize,
    cps: &[usize],
    family: EllipticalFamily,
    delta: f64,
    scale_shift: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if d == 0 || t == 0 {
        return Err(Error::config("generator needs D >= 1 and t >= 1"));
    }
    if !(scale_shift > 0.0) || !delta.is_finite() {
        return Err(Error::config("scale shift must be > 0 and delta finite"));
    }
    let labels = CpLabels::new(cps.to_vec(), t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = mean_path(d, cps.len() + 1, delta, &mut rng);
    let chi = match family {
        EllipticalFamily::Gaussian => None,
        EllipticalFamily::StudentT { dof } => {
            if !(dof > 2.0) {
                return Err(Error::config(format!("Student-t needs dof > 2, got {dof}")));
            }
            Some((ChiSquared::new(dof).expect("dof > 0"), dof))
        }
    };
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t {
        let seg = segment_of(cps, i);
        let scale = if seg % 2 == 1 { scale_shift } else { 1.0 };
        let radial = match &chi {
            None => 1.0,
            Some((c, dof)) => {
                let g: f64 = c.sample(&mut rng);
                ((dof - 2.0) / g).sqrt()
            }
        };
        for &mu in &means[seg] {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mu + scale * radial * z);
        }
    }
    TimeSeries::new(
        format!("synthetic-{t}x{d}"),
        Tensor::new(vec![t, d], data)?,
        Some(labels),
    )
}

/// `k` change points evenly spaced over `t`: `t * j / (k + 1)` for `j = 1..=k`.
pub fn evenly_spaced_cps(t: usize, k: usize) -> Vec<usize> {
    (1..=k).map(|j| t * j / (k + 1)).collect()
}

/// Scales every row to unit Euclidean norm; all-zero rows stay zero.
pub fn normalize_to_sphere(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let d = x.last_dim();
    for row in out.data_mut().chunks_exact_mut(d) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-300 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_repeats() {
        let a = gen_gaussian_mean_shift(3, 200, &[50, 120], 1.0, 5).unwrap();
        let b = gen_gaussian_mean_shift(3, 200, &[50, 120], 1.0, 5).unwrap();
        assert_eq!(a, b);
        let c = gen_gaussian_mean_shift(3, 200, &[50, 120], 1.0, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn segment_means_move_by_delta() {
        let delta = 2.0;
        let s = gen_gaussian_mean_shift(2, 8000, &[4000], delta, 1).unwrap();
        for c in 0..2 {
            let mean = |lo: usize, hi: usize| {
                (lo..hi).map(|i| s.row(i)[c]).sum::<f64>() / (hi - lo) as f64
            };
            let jump = (mean(4000, 8000) - mean(0, 4000)).abs();
            assert!((jump - delta).abs() < 2.0 * 3.0 / 4000f64.sqrt(), "{jump}");
        }
    }

    #[test]
    fn means_stay_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in mean_path(4, 50, 1.5, &mut rng) {
            assert!(m.iter().all(|v| v.abs() <= 1.5));
        }
    }

    #[test]
    fn sphere_rows() {
        let x = Tensor::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let y = normalize_to_sphere(&x);
        assert_eq!(&y.data()[..2], &[0.6, 0.8]);
        assert_eq!(&y.data()[2..4], &[0.0, 0.0]);
        assert_eq!(normalize_to_sphere(&y), y);
    }

    #[test]
    fn student_t_has_unit_variance() {
        let s = gen_elliptical(
            1,
            40000,
            &[],
            EllipticalFamily::StudentT { dof: 8.0 },
            0.0,
            1.0,
            2,
        )
        .unwrap();
        let var = s.values().data().iter().map(|v| v * v).sum::<f64>() / 40000.0;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn even_spacing() {
        assert_eq!(evenly_spaced_cps(5000, 10)[0], 454);
        assert_eq!(evenly_spaced_cps(100, 1), vec![50]);
    }
}
