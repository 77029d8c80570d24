// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trains an SN encoder on a synthetic mean-shift series, tunes the alarm
//! threshold on the validation split and reports test F1.
//!
//! `cargo run --release --example synthetic_cpd -- [seed] [sn|vanilla] [epochs]`

use sncpd::data::{evenly_spaced_cps, gen_gaussian_mean_shift, sliding_windows, split, SplitSpec};
use sncpd::detector::{
    make_window_pairs, margin_f1, score_pairs, threshold_sweep, ScoreConfig, Statistic,
};
use sncpd::encoders::{
    train, Activation, EncoderConfig, EncoderModel, TS2VecTrainer, TrainOptions,
};
use sncpd::specnorm::SNConfig;

fn main() -> sncpd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let sn = args.get(2).is_none_or(|s| s != "vanilla");
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);
    let w = 50;

    let series = gen_gaussian_mean_shift(5, 5000, &evenly_spaced_cps(5000, 10), 1.5, seed)?;
    let (train_part, val, test) = split(&series, &SplitSpec::default())?;
    let config = EncoderConfig {
        input_dim: 5,
        hidden: 32,
        depth: 8,
        kernel_width: 3,
        output_dim: Some(16),
        activation: Activation::Tanh,
        sn: sn.then(|| SNConfig::with_cap(0.9)),
        ..EncoderConfig::default()
    };
    let mut trainer = TS2VecTrainer::new(EncoderModel::new(config, seed)?, 1e-3);
    let train_windows = sliding_windows(train_part.values(), 2 * w, 2)?;
    let val_windows = sliding_windows(val.values(), 2 * w, 10)?;
    let opts = TrainOptions {
        epochs,
        batch_size: 8,
        seed,
        ..TrainOptions::default()
    };
    let outcome = train(&mut trainer, &train_windows, &val_windows, &opts)?;
    println!(
        "trained {} steps, best epoch {:?}, final max layer norm {:.4}",
        outcome.steps(),
        outcome.best_epoch,
        trainer.model.cached_max_layer_norm()
    );

    let cfg = ScoreConfig::new(Statistic::Cosine);
    let val_trace = score_pairs(
        &make_window_pairs(val.values(), w, 1)?,
        &trainer.model,
        &cfg,
    )?;
    let test_trace = score_pairs(
        &make_window_pairs(test.values(), w, 1)?,
        &trainer.model,
        &cfg,
    )?;
    let sweep = threshold_sweep(&val_trace, val.change_points(), w)?;
    let report = margin_f1(
        &test_trace.with_threshold(sweep.threshold),
        test.change_points(),
        w,
    )?;
    println!(
        "threshold {:.4} (validation F1 {:.3}); test precision {:.3} recall {:.3} F1 {:.3}",
        sweep.threshold, sweep.report.f1, report.precision, report.recall, report.f1
    );
    Ok(())
}
