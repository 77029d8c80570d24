// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-distillation training with an EMA target network on a synthetic
//! series, followed by cosine-distance detection.

use sncpd::data::{evenly_spaced_cps, gen_gaussian_mean_shift, sliding_windows, split, SplitSpec};
use sncpd::detector::{
    make_window_pairs, margin_f1, score_pairs, threshold_sweep, ScoreConfig, Statistic,
};
use sncpd::encoders::{byol_backbone_config, train, BYOLTrainer, EncoderModel, TrainOptions};
use sncpd::specnorm::SNConfig;

fn main() -> sncpd::Result<()> {
    let w = 40;
    let series = gen_gaussian_mean_shift(4, 3000, &evenly_spaced_cps(3000, 8), 1.5, 3)?;
    let (train_part, val, test) = split(&series, &SplitSpec::default())?;
    let backbone = byol_backbone_config(4, 32, 16, Some(SNConfig::with_cap(0.9)));
    let mut trainer = BYOLTrainer::new(EncoderModel::new(backbone, 3)?, 64, 16, 0.99, 1e-3, 3)?;
    let outcome = train(
        &mut trainer,
        &sliding_windows(train_part.values(), 2 * w, 4)?,
        &sliding_windows(val.values(), 2 * w, 10)?,
        &TrainOptions {
            epochs: 4,
            seed: 3,
            ..TrainOptions::default()
        },
    )?;
    for r in outcome.history.iter().step_by(50) {
        println!(
            "step {:>4}  loss {:.4}  max layer norm {:.4}",
            r.step, r.loss, r.max_layer_norm
        );
    }

    let cfg = ScoreConfig::new(Statistic::Cosine);
    let val_trace = score_pairs(
        &make_window_pairs(val.values(), w, 1)?,
        &trainer.online,
        &cfg,
    )?;
    let test_trace = score_pairs(
        &make_window_pairs(test.values(), w, 1)?,
        &trainer.online,
        &cfg,
    )?;
    let sweep = threshold_sweep(&val_trace, val.change_points(), w)?;
    let report = margin_f1(
        &test_trace.with_threshold(sweep.threshold),
        test.change_points(),
        w,
    )?;
    println!(
        "test F1 {:.3} at threshold {:.4}",
        report.f1, sweep.threshold
    );
    Ok(())
}
