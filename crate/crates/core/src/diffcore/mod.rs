// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense `f64` tensors with reverse-mode differentiation.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, sgd_step, Adam, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::dot;
