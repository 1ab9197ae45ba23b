//! Client subspace summaries and per-sample teacher weighting.
//!
//! A client compresses its backbone features `Z` into the damped projector
//! `P = Zᵀ(ZZᵀ + αI)⁻¹Z`, accumulated with rank-one inverse updates so no
//! `n x n` system is ever formed. On the server, the angle between a feature
//! `B(x)` and `P·B(x)` scores how well each client's data explains `x`; the
//! standardized scores pass through a softmax to become teacher weights.

mod projection;
mod weights;
mod wire;

pub use projection::{
    projection_closed_form, projection_from_features, projection_iterative, Accumulation, ProjectionBuilder,
    ProjectionMatrix, ProjectionVariant, SYMMETRY_TOL,
};
pub use weights::{affinity, onehot_weights, teacher_weights, weights_from_affinities, TeacherWeights};
pub use wire::{
    deserialize_projection, projection_wire_size, serialize_projection, PROJECTION_HEADER_BYTES, PROJECTION_MAGIC,
    PROJECTION_VERSION,
};
