// SPDX-License-Identifier: MIT OR Apache-2.0

//! Representation dynamics around change points and the Mahalanobis
//! rejection curve, on a briefly trained encoder.

use sncpd::cli::{load_dataset, rejection_study, train_encoder, RunConfig};
use sncpd::detector::dynamics_experiment;

fn main() -> sncpd::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_text("epochs = 2\ntrain_stride = 10\n")?;
    let data = load_dataset(&cfg)?;
    let (model, _) = train_encoder(&cfg, &data)?;

    let dynamics = dynamics_experiment(&model, &data.full, cfg.window, cfg.dynamics_segment)?;
    println!(
        "dynamics over {} change points: shared half {:.6}, straddling windows {:.4}",
        dynamics.used,
        dynamics.shared_mean(),
        dynamics.straddling_mean()
    );

    let (threshold, points) = rejection_study(&cfg, &model, &data)?;
    println!(
        "rejection curve at threshold {threshold:.4}, {} points",
        points.len()
    );
    for p in points.iter().step_by(6) {
        println!(
            "  kept {:>4} ({:.3})  F1 {:.3}",
            p.kept, p.fraction_kept, p.f1
        );
    }
    Ok(())
}
