// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{gradient_error, randn, rng};
use sncpd::diffcore::{sgd_step, Adam, Tape, Tensor};
use sncpd::Error;

const TOL: f64 = 1e-6;

fn away_from_zero(t: Tensor) -> Tensor {
    t.map(|v| {
        if v.abs() < 0.1 {
            v + 0.2f64.copysign(v)
        } else {
            v
        }
    })
}

fn check(
    name: &str,
    inputs: &[Tensor],
    f: impl Fn(&mut Tape, &[sncpd::diffcore::Var]) -> sncpd::Result<sncpd::diffcore::Var>,
) {
    let err = gradient_error(inputs, f);
    assert!(err < TOL, "{name}: relative gradient error {err:.3e}");
}

#[test]
fn gradients_match_finite_differences_for_linear_ops() {
    check("matmul", &[randn(&[3, 4], 1), randn(&[4, 2], 2)], |t, v| {
        t.matmul(v[0], v[1])
    });
    check(
        "dense",
        &[randn(&[2, 5, 3], 3), randn(&[4, 3], 4), randn(&[4], 5)],
        |t, v| t.dense(v[0], v[1], Some(v[2])),
    );
    check("add", &[randn(&[2, 3], 6), randn(&[2, 3], 7)], |t, v| {
        t.add(v[0], v[1])
    });
    check("mul", &[randn(&[2, 3], 8), randn(&[2, 3], 9)], |t, v| {
        t.mul(v[0], v[1])
    });
    check("affine", &[randn(&[6], 10)], |t, v| {
        Ok(t.affine(v[0], -1.7, 0.3))
    });
    check("sum", &[randn(&[2, 2, 2], 11)], |t, v| Ok(t.sum(v[0])));
    check("mean", &[randn(&[3, 4], 12)], |t, v| Ok(t.mean(v[0])));
    check("reshape", &[randn(&[2, 6], 13)], |t, v| {
        t.reshape(v[0], &[3, 2, 2])
    });
    check("slice_time", &[randn(&[2, 7, 3], 14)], |t, v| {
        t.slice_time(v[0], 2, 4)
    });
    check("mean_time", &[randn(&[2, 5, 3], 15)], |t, v| {
        t.mean_time(v[0])
    });
}

#[test]
fn conv1d_gradients_for_every_dilation_and_width() {
    for (width, dilation) in [(1, 1), (2, 1), (3, 1), (3, 2), (3, 4), (5, 3)] {
        let inputs = [
            randn(&[2, 9, 3], 20),
            randn(&[4, width, 3], 21),
            randn(&[4], 22),
        ];
        check(&format!("conv1d w{width} d{dilation}"), &inputs, |t, v| {
            t.conv1d(v[0], v[1], Some(v[2]), dilation)
        });
    }
}

#[test]
fn gradients_match_finite_differences_for_nonlinearities() {
    check("sigmoid", &[randn(&[3, 3], 30)], |t, v| Ok(t.sigmoid(v[0])));
    check("tanh", &[randn(&[3, 3], 31)], |t, v| Ok(t.tanh(v[0])));
    check("relu", &[away_from_zero(randn(&[4, 4], 32))], |t, v| {
        Ok(t.relu(v[0]))
    });
    check("l2_normalize", &[randn(&[2, 3, 4], 33)], |t, v| {
        Ok(t.l2_normalize(v[0]))
    });
    check("max_pool_time", &[randn(&[2, 7, 3], 34)], |t, v| {
        t.max_pool_time(v[0], 2)
    });
    check("dropout", &[randn(&[3, 5], 35)], |t, v| {
        t.dropout(v[0], 0.3, true, &mut rng(99))
    });
    check(
        "sigmoid of matmul",
        &[randn(&[2, 3], 36), randn(&[3, 2], 37)],
        |t, v| {
            let p = t.matmul(v[0], v[1])?;
            Ok(t.sigmoid(p))
        },
    );
}

#[test]
fn contrastive_loss_gradients() {
    let inputs = [randn(&[3, 4, 2], 40), randn(&[3, 4, 2], 41)];
    check("instance", &inputs, |t, v| t.instance_contrast(v[0], v[1]));
    check("temporal", &inputs, |t, v| t.temporal_contrast(v[0], v[1]));
    // The same tensor used as both views.
    check("shared view", &inputs[..1], |t, v| {
        t.instance_contrast(v[0], v[0])
    });
}

#[test]
fn identity_matmul_returns_operand() {
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::eye(2));
    let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let out = tape.matmul(i, a).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let p = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
    let x = tape.constant(Tensor::from_rows(&[vec![5.0], vec![7.0]]).unwrap());
    let out = tape.matmul(p, x).unwrap();
    assert_eq!(tape.value(out).data(), &[5.0, 0.0]);
}

#[test]
fn matmul_shape_mismatch_is_dimension_error() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    let x = tape.constant(Tensor::zeros(&[1, 4, 2]));
    let w = tape.constant(Tensor::zeros(&[3, 3, 5]));
    assert!(matches!(
        tape.conv1d(x, w, None, 1),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn conv_identity_kernel_and_two_tap_average() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 5, 1], vec![0.0, 0.0, 2.0, 0.0, 0.0]).unwrap());
    let id = tape.constant(Tensor::new(vec![1, 3, 1], vec![0.0, 1.0, 0.0]).unwrap());
    let y = tape.conv1d(x, id, None, 1).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    // Width 2 has no left padding: output t averages x[t] and x[t+1].
    let avg = tape.constant(Tensor::new(vec![1, 2, 1], vec![0.5, 0.5]).unwrap());
    let y = tape.conv1d(x, avg, None, 1).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 1.0, 1.0, 0.0, 0.0]);
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::scalar(0.0));
    let s = tape.sigmoid(z);
    assert_eq!(tape.value(s).item(), 0.5);

    let v = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let n = tape.l2_normalize(v);
    assert!(common::max_abs_diff(tape.value(n).data(), &[0.6, 0.8]) < 1e-15);

    let zero = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    let n = tape.l2_normalize(zero);
    assert_eq!(tape.value(n).data(), &[0.0, 0.0]);

    let seq = tape.constant(Tensor::new(vec![1, 4, 1], vec![1.0, 5.0, 2.0, 4.0]).unwrap());
    let p = tape.max_pool_time(seq, 2).unwrap();
    assert_eq!(tape.value(p).data(), &[5.0, 4.0]);
}

#[test]
fn dropout_is_identity_at_inference() {
    let mut tape = Tape::new();
    let x = tape.param(randn(&[4, 4], 50));
    let y = tape.dropout(x, 0.5, false, &mut rng(0)).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());
    assert!(tape.dropout(x, 1.0, true, &mut rng(0)).is_err());
}

#[test]
fn linear_form_gradient_and_unused_parameter() {
    let mut tape = Tape::new();
    let w = tape.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap());
    let unused = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let wx = tape.matmul(w, x).unwrap();
    let loss = tape.sum(wx);
    let g = tape.backward(loss).unwrap();
    // d/dW sum(W x) = 1 xᵀ.
    assert_eq!(g.wrt(w).data(), &[1.0, -1.0, 1.0, -1.0]);
    assert_eq!(g.wrt(unused).data(), &[0.0, 0.0, 0.0]);
    assert!(matches!(tape.backward(wx), Err(Error::Contract(_))));
}

#[test]
fn optimizer_steps() {
    let mut w = Tensor::scalar(1.0);
    let grad = Tensor::scalar(2.0 * w.item());
    sgd_step(&mut [&mut w], &[grad.clone()], 0.0);
    assert_eq!(w.item(), 1.0);
    sgd_step(&mut [&mut w], &[grad], 0.1);
    assert!((w.item() - 0.8).abs() < 1e-15);

    let mut p = Tensor::vector(vec![1.0, -2.0]);
    let mut adam = Adam::new(0.01);
    adam.step(&mut [&mut p], &[Tensor::vector(vec![3.0, -0.5])]);
    // The first bias-corrected step moves each coordinate by lr in the gradient's sign.
    assert!(common::max_abs_diff(p.data(), &[0.99, -1.99]) < 1e-8);
}
