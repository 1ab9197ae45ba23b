//! Deterministic federated-learning simulator with server-side multi-teacher
//! distillation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod datagen;
pub mod error;
pub mod federation;
pub mod neural;
pub mod numerics;
pub mod subspace;

pub use error::{Error, Result};
