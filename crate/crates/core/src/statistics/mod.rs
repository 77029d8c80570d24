// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test statistics: RBF kernel and MMD, cosine distance, matrix-normal
//! likelihood ratios and Mahalanobis scoring.

mod kernel;
mod likelihood;
mod mmd;

pub use kernel::{cosine_distance, median_heuristic, rbf_kernel, KernelConfig, KernelKind};
pub use likelihood::{
    likelihood_ratio, lr_preservation_check, mahalanobis_score, matrix_normal_logpdf, GaussianFit,
    LrCheck, MatrixNormalParams,
};
pub use mmd::{mmd_biased, mmd_test_threshold};
