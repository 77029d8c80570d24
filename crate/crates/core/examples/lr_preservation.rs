// SPDX-License-Identifier: MIT OR Apache-2.0

//! Likelihood ratios of a matrix-normal mean shift, computed on the raw
//! sequence and recovered from its embedding through an invertible encoder.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sncpd::diffcore::Tensor;
use sncpd::encoders::{EncoderConfig, EncoderModel};
use sncpd::specnorm::SNConfig;
use sncpd::statistics::{lr_preservation_check, MatrixNormalParams};

fn main() -> sncpd::Result<()> {
    let (t, d) = (8, 4);
    let sn = SNConfig::with_cap(0.9);
    let model = EncoderModel::new(
        EncoderConfig {
            input_dim: d,
            hidden: d,
            depth: 4,
            output_dim: None,
            dropout: 0.0,
            sn: Some(sn),
            ..EncoderConfig::default()
        },
        7,
    )?;
    let shift = 1.0 / (d as f64).sqrt();
    let pinf = MatrixNormalParams::isotropic(DMatrix::zeros(t, d));
    let p0 = MatrixNormalParams::isotropic(DMatrix::from_element(t, d, shift));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    println!("hypothesis  raw_log_lr  embedded_log_lr  abs_diff");
    for k in 0..8 {
        let mean = if k % 2 == 1 { shift } else { 0.0 };
        let x = Tensor::randn(&[t, d], 1.0, &mut rng).map(|v| v + mean);
        let r = lr_preservation_check(&x, &model, &p0, &pinf, sn.invert_max_iter, 1e-12)?;
        println!(
            "{:<11} {:>10.6} {:>16.6} {:>9.2e}",
            if mean == 0.0 { "null" } else { "shifted" },
            r.raw_log_lr,
            r.embedded_log_lr,
            r.abs_diff()
        );
    }
    Ok(())
}
