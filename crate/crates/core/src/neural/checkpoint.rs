//! Binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "FD3A" | version u32 | layer count u32 |
//!   per layer: rows u32 | cols u32 | rows*cols f64 (row-major) | cols f64 (bias)
//! ```

use crate::error::{Error, Result};
use crate::neural::mlp::{Layer, MlpParams};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FD3A";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_size(params: &MlpParams) -> usize {
    12 + params
        .layers
        .iter()
        .map(|l| 8 + 8 * (l.weights.as_slice().len() + l.bias.len()))
        .sum::<usize>()
}

pub fn encode_checkpoint(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(checkpoint_size(params));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for l in &params.layers {
        out.extend_from_slice(&(l.weights.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(l.weights.cols() as u32).to_le_bytes());
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], format: &'static str) -> Self {
        Self { buf, pos: 0, format }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Corrupt {
                format: self.format,
                detail: format!(
                    "truncated at byte {} (needed {n} more, {} available)",
                    self.pos,
                    self.buf.len() - self.pos
                ),
            }),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.corrupt("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn corrupt(&self, detail: impl Into<String>) -> Error {
        Error::Corrupt {
            format: self.format,
            detail: detail.into(),
        }
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.corrupt(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader::new(bytes, "checkpoint");
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if let Some(prev) = layers.last().map(|l: &Layer| l.weights.cols()) {
            if prev != rows {
                return Err(r.corrupt(format!(
                    "layer {i} expects {rows} inputs but the previous layer has {prev} outputs"
                )));
            }
        }
        let w = r.f64s(rows * cols)?;
        let bias = r.f64s(cols)?;
        let weights = Matrix::from_vec(rows, cols, w).map_err(|e| r.corrupt(format!("layer {i}: {e}")))?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(r.corrupt(format!("layer {i}: non-finite bias")));
        }
        layers.push(Layer { weights, bias });
    }
    r.finish()?;
    Ok(MlpParams { layers })
}
