// SPDX-License-Identifier: MIT OR Apache-2.0

//! Residual encoders `G = h ∘ g` and their self-supervised objectives.

mod augment;
mod byol;
mod checkpoint;
mod losses;
mod model;
mod train;
mod ts2vec;

pub use augment::{
    crop_overlap, crop_pair_at, random_crop_pair, sample_crop_starts, time_slice, CropPair,
};
pub use byol::{byol_backbone_config, BYOLTrainer, Mlp};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use losses::{
    byol_loss, ema_update, hierarchy_levels, ts2vec_hierarchical_loss, ts2vec_instance_loss,
    ts2vec_temporal_loss,
};
pub use model::{Activation, Dense, EncoderConfig, EncoderModel, EncoderVars, ResidualBlock};
pub use train::{train, write_loss_csv, LossRecord, TrainOptions, TrainOutcome, Trainer};
pub use ts2vec::TS2VecTrainer;
