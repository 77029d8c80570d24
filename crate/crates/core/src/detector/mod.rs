// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sliding-window change-point detection, margin F1 evaluation and the
//! diagnostic experiments built on top of it.

mod evaluate;
mod experiments;
mod windows;

pub use evaluate::{margin_f1, margin_f1_masked, threshold_sweep, F1Report, SweepResult};
pub use experiments::{
    dynamics_experiment, interval_embeddings, mmd_power_experiment, rejection_csv, rejection_curve,
    rejection_keep, rejection_schedule, DynamicsResult, PowerConfig, PowerResult, PowerRow,
    RejectionPoint,
};
pub use windows::{
    embed_windows, make_window_pairs, score_pairs, DetectionTrace, EmbeddingMode, ScoreConfig,
    Statistic, WindowPair,
};
