// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{oracles, randn, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use sncpd::diffcore::Tensor;
use sncpd::encoders::{Activation, EncoderConfig, EncoderModel};
use sncpd::specnorm::SNConfig;
use sncpd::statistics::{
    cosine_distance, likelihood_ratio, lr_preservation_check, mahalanobis_score,
    matrix_normal_logpdf, median_heuristic, mmd_biased, mmd_test_threshold, rbf_kernel,
    KernelConfig, MatrixNormalParams,
};
use sncpd::Error;

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.rows().map(<[f64]>::to_vec).collect()
}

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let a = randn(&[n, n], seed);
    let m = DMatrix::from_row_slice(n, n, a.data());
    &m * m.transpose() + DMatrix::identity(n, n) * 0.5
}

fn dm_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

#[test]
fn rbf_examples() {
    let x = [0.4, -1.2, 3.0];
    assert_eq!(rbf_kernel(&x, &x, 0.3), 1.0);
    let sigma = 0.8_f64;
    let y = [x[0] + sigma * 2f64.sqrt(), x[1], x[2]];
    assert!((rbf_kernel(&x, &y, sigma) - (-1f64).exp()).abs() < 1e-15);
    assert!((rbf_kernel(&x, &y, sigma) - 0.367879).abs() < 1e-6);
}

#[test]
fn mmd_single_point_case() {
    let z = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let xi = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let v = mmd_biased(&z, &xi, &KernelConfig::rbf(1.0).unwrap()).unwrap();
    assert!((v - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-12);
    assert!((v - 0.786939).abs() < 1e-6);
}

#[test]
fn mmd_matches_quadratic_loop() {
    for seed in 0..20 {
        let m = 1 + (seed as usize * 7) % 20;
        let d = 1 + seed as usize % 4;
        let (z, xi) = (randn(&[m, d], seed), randn(&[m, d], seed + 1000));
        let sigma = 0.5 + 0.1 * seed as f64;
        let got = mmd_biased(&z, &xi, &KernelConfig::rbf(sigma).unwrap()).unwrap();
        let want = oracles::mmd_biased(z.data(), xi.data(), m, d, sigma);
        assert!((got - want).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn mmd_rejects_unequal_samples() {
    let k = KernelConfig::rbf(1.0).unwrap();
    let err = mmd_biased(&Tensor::zeros(&[3, 2]), &Tensor::zeros(&[4, 2]), &k).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn threshold_examples() {
    let v = mmd_test_threshold(100, 1.0, 0.05).unwrap();
    assert!((v - 0.4875850).abs() < 1e-6, "{v}");
    let near_one = mmd_test_threshold(50, 1.0, 1.0 - 1e-12).unwrap();
    assert!((near_one - (2.0f64 / 50.0).sqrt()).abs() < 1e-6);
    let ratio =
        mmd_test_threshold(64, 1.0, 0.1).unwrap() / mmd_test_threshold(128, 1.0, 0.1).unwrap();
    assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
    assert!(mmd_test_threshold(0, 1.0, 0.05).is_err());
}

#[test]
fn cosine_examples() {
    let y = [1.0, 2.0, -1.0];
    assert!(cosine_distance(&y, &y).abs() < 1e-15);
    assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-15);
    assert!((cosine_distance(&y, &[-1.0, -2.0, 1.0]) - 2.0).abs() < 1e-15);
    assert!(cosine_distance(&[0.0, 0.0, 0.0], &y).is_finite());
}

#[test]
fn median_heuristic_on_a_line() {
    let pts: [&[f64]; 3] = [&[0.0], &[1.0], &[3.0]];
    // Pair distances 1, 3, 2.
    assert_eq!(median_heuristic(&pts).unwrap(), 2.0);
}

#[test]
fn scalar_ratio_midpoint() {
    let x = Tensor::from_rows(&[vec![0.5]]).unwrap();
    let p0 = MatrixNormalParams::isotropic(DMatrix::from_element(1, 1, 0.0));
    let pinf = MatrixNormalParams::isotropic(DMatrix::from_element(1, 1, 1.0));
    assert!(likelihood_ratio(&x, &p0, &pinf).unwrap().abs() < 1e-15);
    let any = randn(&[1, 1], 3);
    assert_eq!(likelihood_ratio(&any, &p0, &p0).unwrap(), 0.0);
}

#[test]
fn matrix_normal_matches_kronecker_oracle() {
    for (seed, (t, d)) in [(1, (2, 2)), (2, (3, 2)), (3, (2, 4))] {
        let u = random_spd(t, seed);
        let v = random_spd(d, seed + 10);
        let mean = randn(&[t, d], seed + 20);
        let x = randn(&[t, d], seed + 30);
        let p = MatrixNormalParams::new(
            DMatrix::from_row_slice(t, d, mean.data()),
            u.clone(),
            v.clone(),
        )
        .unwrap();
        let got = matrix_normal_logpdf(&x, &p).unwrap();
        let want = oracles::kronecker_logpdf(&rows(&x), &rows(&mean), &dm_rows(&u), &dm_rows(&v));
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn non_spd_covariance_is_a_decomposition_error() {
    let mut bad = DMatrix::identity(2, 2);
    bad[(1, 1)] = -1.0;
    let p = MatrixNormalParams::new(DMatrix::zeros(2, 2), bad, DMatrix::identity(2, 2)).unwrap();
    let err = matrix_normal_logpdf(&Tensor::zeros(&[2, 2]), &p).unwrap_err();
    assert!(matches!(err, Error::Decomposition(_)));
}

fn square_sn_model(d: usize, seed: u64) -> EncoderModel {
    EncoderModel::new(
        EncoderConfig {
            input_dim: d,
            hidden: d,
            depth: 4,
            kernel_width: 3,
            output_dim: None,
            activation: Activation::Tanh,
            dropout: 0.0,
            sn: Some(SNConfig::with_cap(0.9)),
            ..EncoderConfig::default()
        },
        seed,
    )
    .unwrap()
}

#[test]
fn likelihood_ratio_survives_invertible_encoder() {
    let (t, d) = (8, 4);
    let model = square_sn_model(d, 7);
    let shift = 1.0 / (d as f64).sqrt();
    let p0 = MatrixNormalParams::isotropic(DMatrix::from_element(t, d, shift));
    let pinf = MatrixNormalParams::isotropic(DMatrix::zeros(t, d));
    let mut r = rng(8);
    for k in 0..20 {
        let mut x = randn(&[t, d], 100 + k);
        if r.random::<bool>() {
            x = x.map(|v| v + shift);
        }
        let check = lr_preservation_check(&x, &model, &p0, &pinf, 500, 1e-12).unwrap();
        assert!(check.abs_diff() < 1e-4, "{check:?}");
    }
}

#[test]
fn identity_encoder_gives_equal_ratios() {
    let model = EncoderModel::identity(3, 2, Activation::Tanh).unwrap();
    let p0 = MatrixNormalParams::isotropic(DMatrix::from_element(5, 3, 0.5));
    let pinf = MatrixNormalParams::isotropic(DMatrix::zeros(5, 3));
    let x = randn(&[5, 3], 9);
    let check = lr_preservation_check(&x, &model, &p0, &pinf, 10, 1e-12).unwrap();
    assert_eq!(check.raw_log_lr, check.embedded_log_lr);
}

#[test]
fn rank_deficient_input_map_is_rejected() {
    let mut model = square_sn_model(3, 10);
    let w = model.input.weight.data_mut();
    for c in 0..3 {
        w[2 * 3 + c] = w[c];
    }
    let p = MatrixNormalParams::isotropic(DMatrix::zeros(4, 3));
    let err = lr_preservation_check(&randn(&[4, 3], 11), &model, &p, &p, 100, 1e-10).unwrap_err();
    assert!(matches!(err, Error::Decomposition(_)), "{err}");
}

#[test]
fn mahalanobis_examples_and_inverse_oracle() {
    let cov = random_spd(4, 12);
    let mean = randn(&[4], 13).into_data();
    assert_eq!(mahalanobis_score(&mean, &mean, &cov).unwrap(), 0.0);

    let y = randn(&[4], 14).into_data();
    let eye = DMatrix::identity(4, 4);
    let euclid: f64 = y
        .iter()
        .zip(&mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((mahalanobis_score(&y, &mean, &eye).unwrap() - euclid).abs() < 1e-12);

    let diff: Vec<f64> = y.iter().zip(&mean).map(|(a, b)| a - b).collect();
    let (sol, _) = oracles::solve(&dm_rows(&cov), &diff);
    let want: f64 = diff
        .iter()
        .zip(&sol)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .sqrt();
    assert!((mahalanobis_score(&y, &mean, &cov).unwrap() - want).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mmd_is_nonnegative_symmetric_and_permutation_invariant(
        seed in 0u64..10_000,
        m in 1usize..12,
        d in 1usize..4,
        sigma in 0.2f64..3.0,
    ) {
        let k = KernelConfig::rbf(sigma).unwrap();
        let (z, xi) = (randn(&[m, d], seed), randn(&[m, d], seed + 1));
        let v = mmd_biased(&z, &xi, &k).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((v - mmd_biased(&xi, &z, &k).unwrap()).abs() < 1e-12);
        let mut order: Vec<Vec<f64>> = rows(&z);
        order.reverse();
        order.rotate_left(seed as usize % m);
        let permuted = Tensor::from_rows(&order).unwrap();
        prop_assert!((v - mmd_biased(&permuted, &xi, &k).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rbf_is_symmetric_and_bounded(seed in 0u64..10_000, sigma in 0.1f64..5.0) {
        let v = randn(&[2, 3], seed);
        let (a, b) = (&v.data()[..3], &v.data()[3..]);
        let k = rbf_kernel(a, b, sigma);
        prop_assert!(k > 0.0 && k <= 1.0);
        prop_assert_eq!(k, rbf_kernel(b, a, sigma));
    }

    #[test]
    fn common_normalizer_cancels_in_ratio(seed in 0u64..10_000, scale in 0.2f64..5.0) {
        let x = randn(&[3, 2], seed);
        let m0 = DMatrix::from_row_slice(3, 2, randn(&[3, 2], seed + 1).data());
        let u = DMatrix::identity(3, 3);
        let v = DMatrix::identity(2, 2);
        let base = likelihood_ratio(
            &x,
            &MatrixNormalParams::new(m0.clone(), u.clone(), v.clone()).unwrap(),
            &MatrixNormalParams::new(DMatrix::zeros(3, 2), u.clone(), v.clone()).unwrap(),
        ).unwrap();
        // Scaling both row covariances changes both normalizers equally.
        let scaled = likelihood_ratio(
            &x,
            &MatrixNormalParams::new(m0, &u * scale, v.clone()).unwrap(),
            &MatrixNormalParams::new(DMatrix::zeros(3, 2), &u * scale, v).unwrap(),
        ).unwrap();
        prop_assert!((scaled - base / scale).abs() < 1e-10 * (1.0 + base.abs()));
    }
}
