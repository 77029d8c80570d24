// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-sample MMD type-II error in observation space and through an SN
//! encoder, as a function of sample size.
//!
//! `cargo run --release --example mmd_power -- [dim] [trials] [delta]`

use sncpd::detector::{mmd_power_experiment, PowerConfig};
use sncpd::encoders::{EncoderConfig, EncoderModel};
use sncpd::specnorm::SNConfig;

fn main() -> sncpd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let dim: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let trials: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
    let delta: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let encoder = EncoderModel::new(
        EncoderConfig {
            input_dim: dim,
            sn: Some(SNConfig::with_cap(0.9)),
            ..EncoderConfig::default()
        },
        0,
    )?;
    let result = mmd_power_experiment(
        &encoder,
        &PowerConfig {
            trials,
            delta,
            ..PowerConfig::default()
        },
    )?;
    print!("{}", result.to_csv());
    let (raw, embedded) = result.log_log_slopes();
    println!(
        "bandwidths raw {:.3} embedded {:.3}; log-log slopes raw {raw:.3} embedded {embedded:.3}",
        result.raw_sigma, result.embedded_sigma
    );
    Ok(())
}
