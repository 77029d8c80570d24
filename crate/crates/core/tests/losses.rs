// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{gradient_error, oracles, randn, rng};
use sncpd::diffcore::{Tape, Tensor, Var};
use sncpd::encoders::{
    byol_loss, crop_overlap, ema_update, hierarchy_levels, random_crop_pair,
    ts2vec_hierarchical_loss, ts2vec_instance_loss, ts2vec_temporal_loss, Activation,
    EncoderConfig, EncoderModel,
};
use sncpd::specnorm::SNConfig;

type LossFn = fn(&mut Tape, Var, Var) -> sncpd::Result<Var>;

fn eval(f: LossFn, a: &Tensor, b: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let (x, y) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let l = f(&mut tape, x, y).unwrap();
    tape.value(l).item()
}

#[test]
fn contrastive_losses_match_scalar_loops() {
    for (seed, (b, t, c)) in [
        (1, (2, 5, 3)),
        (2, (4, 8, 2)),
        (3, (3, 7, 4)),
        (4, (1, 3, 2)),
    ] {
        let (h, g) = (randn(&[b, t, c], seed), randn(&[b, t, c], seed + 1));
        let pairs: [(LossFn, fn(&[f64], &[f64], usize, usize, usize) -> f64); 3] = [
            (ts2vec_instance_loss, oracles::instance_loss),
            (ts2vec_temporal_loss, oracles::temporal_loss),
            (ts2vec_hierarchical_loss, oracles::hierarchical_loss),
        ];
        for (lib, oracle) in pairs {
            let got = eval(lib, &h, &g);
            let want = oracle(h.data(), g.data(), b, t, c);
            assert!((got - want).abs() < 1e-10, "({b},{t},{c}): {got} vs {want}");
        }
    }
}

#[test]
fn byol_loss_matches_scalar_loop_and_examples() {
    let (p, z) = (randn(&[6, 5], 20), randn(&[6, 5], 21));
    let got = eval(byol_loss, &p, &z);
    assert!((got - oracles::byol_loss(p.data(), z.data(), 6, 5)).abs() < 1e-10);

    let v = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let ortho = Tensor::from_rows(&[vec![-2.0, 1.0]]).unwrap();
    let opposite = Tensor::from_rows(&[vec![-3.0, -6.0]]).unwrap();
    assert!(eval(byol_loss, &v, &v).abs() < 1e-15);
    assert!((eval(byol_loss, &v, &ortho) - 2.0).abs() < 1e-15);
    assert!((eval(byol_loss, &v, &opposite) - 4.0).abs() < 1e-15);
}

#[test]
fn identical_embeddings_give_log_three() {
    let row = [0.3, -0.7, 0.2];
    let h = Tensor::new(vec![2, 1, 3], row.iter().chain(&row).copied().collect()).unwrap();
    assert!((eval(ts2vec_instance_loss, &h, &h) - 3f64.ln()).abs() < 1e-14);
}

#[test]
fn confident_views_drive_instance_loss_to_zero() {
    // Orthogonal, widely separated embeddings: the positive dominates.
    let mut data = vec![0.0; 2 * 1 * 2];
    data[0] = 30.0;
    data[3] = 30.0;
    let h = Tensor::new(vec![2, 1, 2], data).unwrap();
    assert!(eval(ts2vec_instance_loss, &h, &h) < 1e-12);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let views = [randn(&[3, 6, 2], 30), randn(&[3, 6, 2], 31)];
    for f in [
        ts2vec_instance_loss,
        ts2vec_temporal_loss,
        ts2vec_hierarchical_loss,
    ] {
        let err = gradient_error(&views, |t, v| f(t, v[0], v[1]));
        assert!(err < 1e-4, "{err}");
    }
    let rows = [randn(&[4, 3], 32), randn(&[4, 3], 33)];
    let err = gradient_error(&rows, |t, v| byol_loss(t, v[0], v[1]));
    assert!(err < 1e-4, "{err}");
}

#[test]
fn hierarchical_loss_gradient_through_encoder() {
    let model = EncoderModel::new(
        EncoderConfig {
            input_dim: 2,
            hidden: 4,
            depth: 2,
            kernel_width: 3,
            output_dim: Some(3),
            activation: Activation::Tanh,
            dropout: 0.0,
            sn: Some(SNConfig::default()),
            ..EncoderConfig::default()
        },
        40,
    )
    .unwrap();
    let x = randn(&[2, 6, 2], 41);
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let err = gradient_error(&params, |tape, vars| {
        // Same forward pass as the encoder, on the perturbed parameter copies.
        let xv = tape.constant(x.clone());
        let (w_in, b_in) = (vars[0], vars[1]);
        let mut z = tape.dense(xv, w_in, Some(b_in))?;
        for (l, block) in model.blocks.iter().enumerate() {
            let pre = tape.conv1d(z, vars[2 + 2 * l], Some(vars[3 + 2 * l]), block.dilation)?;
            let act = tape.tanh(pre);
            z = tape.add(z, act)?;
        }
        let k = 2 + 2 * model.blocks.len();
        let out = tape.dense(z, vars[k], Some(vars[k + 1]))?;
        let a = tape.slice_time(out, 0, 4)?;
        let b = tape.slice_time(out, 2, 4)?;
        ts2vec_hierarchical_loss(tape, a, b)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn level_count() {
    assert_eq!(hierarchy_levels(1), 1);
    assert_eq!(hierarchy_levels(2), 2);
    assert_eq!(hierarchy_levels(50), 6);
}

#[test]
fn ema_examples() {
    let mut xi = Tensor::vector(vec![0.0, 2.0]);
    let theta = Tensor::vector(vec![1.0, 4.0]);
    ema_update(&mut [&mut xi], &[&theta], 0.99).unwrap();
    assert!(common::max_abs_diff(xi.data(), &[0.01, 2.02]) < 1e-15);

    let mut copy = Tensor::vector(vec![5.0, 5.0]);
    ema_update(&mut [&mut copy], &[&theta], 0.0).unwrap();
    assert_eq!(copy, theta);

    let mut frozen = Tensor::vector(vec![5.0, 5.0]);
    ema_update(&mut [&mut frozen], &[&theta], 1.0).unwrap();
    assert_eq!(frozen.data(), &[5.0, 5.0]);
}

#[test]
fn ema_contracts_towards_fixed_online_weights() {
    let theta = randn(&[10], 50);
    let mut xi = randn(&[10], 51);
    let mut gap = xi.distance(&theta);
    for _ in 0..20 {
        ema_update(&mut [&mut xi], &[&theta], 0.9).unwrap();
        let next = xi.distance(&theta);
        assert!((next - 0.9 * gap).abs() < 1e-12);
        gap = next;
    }
}

#[test]
fn crops_have_half_length_and_report_overlap() {
    let x = randn(&[20, 3], 60);
    let mut r = rng(61);
    for _ in 0..50 {
        let pair = random_crop_pair(&x, &mut r).unwrap();
        assert_eq!(pair.view1.shape(), &[10, 3]);
        assert_eq!(pair.overlap, crop_overlap(pair.start1, pair.start2, 10));
        let row = |v: &Tensor, i: usize| v.data()[i * 3..(i + 1) * 3].to_vec();
        assert_eq!(row(&pair.view1, 0), row(&x, pair.start1));
    }
    assert_eq!(crop_overlap(0, 10, 10), None);
    assert_eq!(crop_overlap(3, 7, 10), Some(7..13));
}
