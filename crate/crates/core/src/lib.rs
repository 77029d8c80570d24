// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod cli;
pub mod data;
pub mod detector;
pub mod diffcore;
pub mod encoders;
pub mod error;
pub mod specnorm;
pub mod statistics;

pub use error::{Error, Result};
