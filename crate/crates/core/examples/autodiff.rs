// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reverse-mode gradients on the tape, checked against a central
//! difference, and a few Adam steps on a least-squares problem.

use sncpd::diffcore::{Adam, Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor) -> sncpd::Result<f64> {
    let mut tape = Tape::new();
    let (w, x) = (tape.constant(w.clone()), tape.constant(x.clone()));
    let y = tape.matmul(x, w)?;
    let y = tape.tanh(y);
    let l = tape.sum(y);
    Ok(tape.value(l).item())
}

fn main() -> sncpd::Result<()> {
    let x = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.3], vec![-0.7, 0.9]])?;
    let w = Tensor::from_rows(&[vec![0.2], vec![-0.4]])?;

    let mut tape = Tape::new();
    let wv = tape.param(w.clone());
    let xv = tape.constant(x.clone());
    let y = tape.matmul(xv, wv)?;
    let y = tape.tanh(y);
    let l = tape.sum(y);
    let grad = tape.backward(l)?.wrt(wv);

    let h = 1e-6;
    for k in 0..2 {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[k] += h;
        down.data_mut()[k] -= h;
        let numeric = (loss(&up, &x)? - loss(&down, &x)?) / (2.0 * h);
        println!(
            "d loss / d w[{k}]: tape {:.9}, central difference {numeric:.9}",
            grad.data()[k]
        );
    }

    // Fit w so that x w matches a target column.
    let target = Tensor::from_rows(&[vec![1.0], vec![0.0], vec![-1.0]])?;
    let mut w = Tensor::zeros(&[2, 1]);
    let mut adam = Adam::new(0.1);
    for step in 0..=200 {
        let mut tape = Tape::new();
        let wv = tape.param(w.clone());
        let xv = tape.constant(x.clone());
        let neg = tape.constant(target.map(|v| -v));
        let pred = tape.matmul(xv, wv)?;
        let r = tape.add(pred, neg)?;
        let sq = tape.mul(r, r)?;
        let l = tape.mean(sq);
        if step % 50 == 0 {
            println!("step {step:>3}  mse {:.6}", tape.value(l).item());
        }
        let g = tape.backward(l)?.wrt(wv);
        adam.step(&mut [&mut w], &[g]);
    }
    println!("fitted w = {:?}", w.data());
    Ok(())
}
