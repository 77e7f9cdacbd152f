use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::synthetic::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: DenseMatrix,
    pub bias: Option<Vec<f64>>,
}

/// Stack of graph-convolution (or plain dense) layers. Hidden layers apply
/// ReLU; the last layer emits raw scores and softmax lives in the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub layers: Vec<LayerSpec>,
}

impl GcnModel {
    /// Glorot-uniform weights drawn from a seeded generator.
    pub fn glorot(dims: &[usize], with_bias: bool, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer dims {dims:?}")));
        }
        let mut rng = rng(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
                LayerSpec {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weight: DenseMatrix::from_raw(fan_in, fan_out, data),
                    bias: with_bias.then(|| vec![0.0; fan_out]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// `[in, hidden, …, hidden, classes]` for `depth` layers.
    pub fn dims_for(in_dim: usize, hidden: usize, classes: usize, depth: usize) -> Vec<usize> {
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(hidden, depth.saturating_sub(1)));
        dims.push(classes);
        dims
    }

    pub fn from_weights(weights: Vec<DenseMatrix>) -> Result<Self> {
        let layers = weights
            .into_iter()
            .map(|w| LayerSpec {
                in_dim: w.rows(),
                out_dim: w.cols(),
                weight: w,
                bias: None,
            })
            .collect();
        let m = Self { layers };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("model has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.shape() != (l.in_dim, l.out_dim) {
                return Err(Error::DimensionMismatch(format!("layer {i} weight shape")));
            }
            if !l.weight.is_finite() {
                return Err(Error::NonFiniteLayer { layer: i });
            }
            if l.bias.as_ref().is_some_and(|b| b.len() != l.out_dim) {
                return Err(Error::DimensionMismatch(format!("layer {i} bias length")));
            }
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim,
                    i + 1,
                    w[1].in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }
}
