// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bi-Lipschitz and kernel certification of an SN encoder, then of the same
//! encoder with one layer pushed past the cap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sncpd::encoders::{EncoderConfig, EncoderModel};
use sncpd::specnorm::{certify_bilipschitz, sample_sphere_pairs, SNConfig};

fn main() -> sncpd::Result<()> {
    let model = EncoderModel::new(
        EncoderConfig {
            input_dim: 5,
            hidden: 16,
            depth: 8,
            sn: Some(SNConfig::with_cap(0.9)),
            ..EncoderConfig::default()
        },
        1,
    )?;
    let pairs = sample_sphere_pairs(1000, &[50, 16], &mut ChaCha8Rng::seed_from_u64(2));

    let report = certify_bilipschitz(&model, &pairs, 0.9, 50)?;
    print!("{}", report.to_kv());
    println!("passes: {}\n", report.passes());

    let mut broken = model.clone();
    broken.rescale_block(4, 3.0, 50);
    let report = certify_bilipschitz(&broken, &pairs, 0.9, 50)?;
    println!(
        "layer 4 rescaled to 3: cap violations {}, ratio violations {}, passes: {}",
        report.cap_violations,
        report.ratio_violations,
        report.passes()
    );
    Ok(())
}
