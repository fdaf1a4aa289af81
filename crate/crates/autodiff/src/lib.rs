//! Minimal dense-tensor kernel with reverse-mode differentiation.
//!
//! Tensors are plain row-major buffers. Differentiable computation happens on
//! a [`Tape`], which records every operation applied to its [`Var`] handles and
//! replays them in reverse from a scalar loss. Model weights live in a
//! [`ParamStore`] and are borrowed by the tape, never copied.
//!
//! Everything is generic over [`Real`] so the same model code runs in `f32`
//! for training and in `f64` for gradient checking.

mod error;
pub mod gradcheck;
mod optim;
mod params;
mod real;
pub mod rng;
mod tape;
mod tensor;

pub use error::{Error, Result};
pub use optim::{AdaDelta, AdaDeltaConfig};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor;
