//! Projection wire format:
//!
//! ```text
//! "FD3P" | version u32 | dim u32 | ridge_alpha f64 | sample_count u64 | dim² f64 row-major
//! ```
//!
//! All fields little-endian.

use crate::error::Result;
use crate::neural::Reader;
use crate::numerics::Matrix;
use crate::subspace::projection::{ProjectionMatrix, SYMMETRY_TOL};

pub const PROJECTION_MAGIC: &[u8; 4] = b"FD3P";
pub const PROJECTION_VERSION: u32 = 1;
pub const PROJECTION_HEADER_BYTES: usize = 4 + 4 + 4 + 8 + 8;

/// Serialized size of a `dim x dim` projector.
pub fn projection_wire_size(dim: usize) -> usize {
    PROJECTION_HEADER_BYTES + 8 * dim * dim
}

pub fn serialize_projection(p: &ProjectionMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(projection_wire_size(p.dim()));
    out.extend_from_slice(PROJECTION_MAGIC);
    out.extend_from_slice(&PROJECTION_VERSION.to_le_bytes());
    out.extend_from_slice(&(p.dim() as u32).to_le_bytes());
    out.extend_from_slice(&p.ridge_alpha().to_le_bytes());
    out.extend_from_slice(&p.sample_count().to_le_bytes());
    for v in p.matrix().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize_projection(bytes: &[u8]) -> Result<ProjectionMatrix> {
    let mut r = Reader::new(bytes, "projection");
    if r.take(4)? != PROJECTION_MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != PROJECTION_VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(r.corrupt("zero dimension"));
    }
    let alpha = r.f64()?;
    let count = r.u64()?;
    let data = r.f64s(dim * dim)?;
    r.finish()?;
    let p = Matrix::from_vec(dim, dim, data).map_err(|e| r.corrupt(e.to_string()))?;
    if !p.is_symmetric(SYMMETRY_TOL) {
        return Err(r.corrupt("matrix is not symmetric"));
    }
    ProjectionMatrix::new(p, alpha, count).map_err(|e| r.corrupt(e.to_string()))
}
