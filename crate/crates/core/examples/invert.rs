// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixed-point inversion of the residual stack, and what happens when one
//! branch is expanding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sncpd::diffcore::Tensor;
use sncpd::encoders::{EncoderConfig, EncoderModel};
use sncpd::specnorm::{invert_hidden, SNConfig};
use sncpd::Error;

fn main() -> sncpd::Result<()> {
    let sn = SNConfig::with_cap(0.9);
    let model = EncoderModel::new(
        EncoderConfig {
            input_dim: 3,
            hidden: 8,
            depth: 6,
            sn: Some(sn),
            ..EncoderConfig::default()
        },
        4,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = Tensor::randn(&[1, 40, 8], 1.0, &mut rng);
    let y = model.apply_hidden(&z)?;
    let (back, stats) = invert_hidden(&model, &y, sn.invert_max_iter, sn.invert_tol)?;
    println!(
        "round trip error {:.3e} after {} iterations (at most {} per block)",
        back.distance(&z),
        stats.iterations,
        stats.max_block_iterations
    );

    // A center tap of 1.5·I makes block 0 expand near the origin.
    let mut expanding = model.clone();
    let (h, width) = (expanding.hidden_dim(), expanding.blocks[0].kernel_width());
    let mut w = Tensor::zeros(expanding.blocks[0].weight.shape());
    for c in 0..h {
        w.data_mut()[(c * width + width / 2) * h + c] = 1.5;
    }
    expanding.blocks[0].weight = w;
    expanding.blocks[0].bias = Tensor::zeros(&[h]);
    let mut small = Tensor::randn(&[1, 40, h], 1.0, &mut rng);
    small.scale_in_place(0.1);
    match invert_hidden(&expanding, &small, sn.invert_max_iter, sn.invert_tol) {
        Err(Error::Convergence {
            iterations,
            residual,
        }) => {
            println!("expanding block: no convergence after {iterations} iterations, residual {residual:.3e}")
        }
        other => println!(
            "expanding block: unexpected outcome {:?}",
            other.map(|r| r.1)
        ),
    }
    Ok(())
}
