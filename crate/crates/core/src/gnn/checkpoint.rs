//! Flat binary model checkpoints.
//!
//! Layout, all little-endian: `u32` layer count, then per layer
//! `u32 in_dim, u32 out_dim, u32 has_bias`, then for each layer its weights
//! as row-major `f32` followed by the bias (if any) as `f32`.

use std::path::Path;

use super::model::{GcnModel, LayerSpec};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

pub fn encode(model: &GcnModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for l in &model.layers {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        out.extend_from_slice(&u32::from(l.bias.is_some()).to_le_bytes());
    }
    for l in &model.layers {
        let bias = l.bias.iter().flatten();
        for v in l.weight.data().iter().chain(bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<GcnModel> {
    let bad = |why: &str| Error::InvalidParameter(format!("checkpoint: {why}"));
    let mut cursor = bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
    if !bytes.len().is_multiple_of(4) {
        return Err(bad("length is not a multiple of 4"));
    }
    let mut next_u32 = || cursor.next().map(u32::from_le_bytes).ok_or_else(|| bad("truncated header"));
    let count = next_u32()? as usize;
    let mut dims = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let (i, o, b) = (next_u32()? as usize, next_u32()? as usize, next_u32()?);
        if b > 1 {
            return Err(bad("bias flag must be 0 or 1"));
        }
        dims.push((i, o, b == 1));
    }
    let mut values = bytes[4 * (1 + 3 * count)..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut layers = Vec::with_capacity(count);
    for (i, o, has_bias) in dims {
        let w: Vec<f64> = values.by_ref().take(i * o).collect();
        if w.len() != i * o {
            return Err(bad("truncated weights"));
        }
        let bias = if has_bias {
            let b: Vec<f64> = values.by_ref().take(o).collect();
            if b.len() != o {
                return Err(bad("truncated bias"));
            }
            Some(b)
        } else {
            None
        };
        layers.push(LayerSpec {
            in_dim: i,
            out_dim: o,
            weight: DenseMatrix::from_vec(i, o, w)?,
            bias,
        });
    }
    if values.next().is_some() {
        return Err(bad("trailing data"));
    }
    let model = GcnModel { layers };
    model.validate()?;
    Ok(model)
}

pub fn save(model: &GcnModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<GcnModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
