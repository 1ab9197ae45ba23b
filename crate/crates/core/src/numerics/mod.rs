//! Dense linear algebra, seeded sampling and small statistics helpers.
//!
//! Everything is `f64`; the projection recursions in [`crate::subspace`]
//! lose too much accuracy in single precision.

mod matrix;
mod rng;
mod stats;

pub use matrix::{dot, norm, Matrix};
pub use rng::{rng_normal, Rng};
pub(crate) use stats::softmax_in_place;
pub use stats::{argmax, cosine, mean, mean_std, softmax, standardize, variance, NORM_EPS, VAR_EPS};
