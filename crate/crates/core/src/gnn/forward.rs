use bitvec::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::GcnModel;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::sparsify::{
    masked_spmm_counted, sparsify_edges_nodewise, sparsify_weights, EdgeMask, MaskChain, OpCount, PruneStats,
    ThresholdPolicy,
};

/// Keep flags for the entries of one weight matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMask {
    rows: usize,
    cols: usize,
    keep: BitVec<u64, Lsb0>,
}

impl WeightMask {
    pub fn of_nonzeros(w: &DenseMatrix) -> Self {
        Self {
            rows: w.rows(),
            cols: w.cols(),
            keep: w.data().iter().map(|v| *v != 0.0).collect(),
        }
    }

    pub fn kept(&self) -> usize {
        self.keep.count_ones()
    }

    pub fn is_kept(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.cols + c]
    }

    pub fn apply(&self, w: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(w.shape(), (self.rows, self.cols));
        let mut out = w.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if !self.keep[i] {
                *v = 0.0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerTrace {
    pub eta_a: f64,
    pub eta_w: f64,
    pub q_a: usize,
    pub q_w: usize,
    pub kept_edges: usize,
    pub kept_weights: usize,
    pub prop_ops: OpCount,
    pub trans_macs: u64,
    pub prop_flops: u64,
    pub trans_flops: u64,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Final-layer scores before softmax.
    pub logits: DenseMatrix,
    pub edge_masks: MaskChain,
    pub weight_masks: Vec<WeightMask>,
}

impl ForwardTrace {
    pub fn prop_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.prop_flops).sum()
    }

    pub fn trans_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.trans_flops).sum()
    }

    pub fn mean_eta_a(&self) -> f64 {
        mean(self.layers.iter().map(|l| l.eta_a))
    }

    pub fn mean_eta_w(&self) -> f64 {
        mean(self.layers.iter().map(|l| l.eta_w))
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

/// Masks that replace the thresholding step, per layer.
#[derive(Debug, Clone, Default)]
pub struct FrozenMasks {
    pub edges: Option<Vec<EdgeMask>>,
    pub weights: Option<Vec<WeightMask>>,
}

pub(crate) struct LayerCache {
    pub propagated: DenseMatrix,
    pub w_hat: DenseMatrix,
    pub pre: DenseMatrix,
}

pub(crate) struct ForwardState {
    pub trace: ForwardTrace,
    pub caches: Vec<LayerCache>,
}

/// Joint edge and weight sparsified forward pass of an iterative GCN.
pub fn forward_sparsified(model: &GcnModel, t: &CsrGraph, x: &DenseMatrix, policy: &ThresholdPolicy) -> Result<ForwardTrace> {
    forward_impl(model, Some(t), x, policy, &FrozenMasks::default(), 2).map(|s| s.trace)
}

/// Transform stage of a decoupled model: dense layers with weight pruning only.
pub fn mlp_forward(model: &GcnModel, h0: &DenseMatrix, delta_w: f64) -> Result<ForwardTrace> {
    let policy = ThresholdPolicy {
        delta_w,
        ..ThresholdPolicy::default()
    };
    forward_impl(model, None, h0, &policy, &FrozenMasks::default(), 2).map(|s| s.trace)
}

pub(crate) fn forward_impl(
    model: &GcnModel,
    graph: Option<&CsrGraph>,
    x: &DenseMatrix,
    policy: &ThresholdPolicy,
    frozen: &FrozenMasks,
    flops_per_mac: u64,
) -> Result<ForwardState> {
    model.validate()?;
    policy.validate()?;
    if x.cols() != model.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns, model expects {}",
            x.cols(),
            model.in_dim()
        )));
    }
    if let Some(t) = graph {
        if t.n() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes, features {} rows",
                t.n(),
                x.rows()
            )));
        }
    }
    let n = x.rows();
    let depth = model.depth();
    let mut trace = ForwardTrace {
        layers: Vec::with_capacity(depth),
        logits: DenseMatrix::zeros(n, model.out_dim()),
        edge_masks: MaskChain::new(),
        weight_masks: Vec::with_capacity(depth),
    };
    let mut caches = Vec::with_capacity(depth);
    let mut h = x.clone();
    let mut prev = graph.map(|t| EdgeMask::full(t.nnz()));

    for (li, layer) in model.layers.iter().enumerate() {
        let mut lt = LayerTrace::default();
        let propagated = match graph {
            Some(t) => {
                let prev_mask = prev.as_ref().expect("graph present");
                let (mask, stats) = match frozen.edges.as_ref().and_then(|m| m.get(li)) {
                    Some(m) => (m.clone(), PruneStats::edges(m)),
                    None => sparsify_edges_nodewise(t, &h, policy.delta_a, prev_mask, policy.exempt_self_loops)?,
                };
                let (p, ops) = masked_spmm_counted(t, &mask, &h, policy.skip_connection)?;
                lt.eta_a = stats.eta_a;
                lt.q_a = stats.q_a;
                lt.kept_edges = mask.kept();
                lt.prop_ops = ops;
                lt.prop_flops = ops.flops(flops_per_mac);
                trace.edge_masks.push(mask.clone())?;
                prev = Some(mask);
                p
            }
            None => h,
        };
        let (w_hat, wmask) = match frozen.weights.as_ref().and_then(|m| m.get(li)) {
            Some(m) => (m.apply(&layer.weight), m.clone()),
            None => {
                let (w_hat, _) = sparsify_weights(&layer.weight, &propagated, policy.delta_w)?;
                let m = WeightMask::of_nonzeros(&w_hat);
                (w_hat, m)
            }
        };
        let total_w = layer.in_dim * layer.out_dim;
        lt.kept_weights = wmask.kept();
        lt.q_w = total_w - lt.kept_weights;
        lt.eta_w = lt.q_w as f64 / total_w as f64;

        let (mut pre, macs) = sparse_weight_product(&propagated, &w_hat, &wmask);
        if let Some(bias) = &layer.bias {
            for r in 0..n {
                for (z, b) in pre.row_mut(r).iter_mut().zip(bias) {
                    *z += b;
                }
            }
        }
        lt.trans_macs = macs;
        lt.trans_flops = macs * flops_per_mac;
        if !pre.is_finite() {
            return Err(Error::NonFiniteLayer { layer: li });
        }
        let last = li + 1 == depth;
        h = if last {
            pre.clone()
        } else {
            let mut a = pre.clone();
            a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            a
        };
        trace.layers.push(lt);
        trace.weight_masks.push(wmask);
        caches.push(LayerCache { propagated, w_hat, pre });
    }
    trace.logits = h;
    Ok(ForwardState { trace, caches })
}

/// `P·Ŵ` touching only kept weight entries; returns the multiply-adds the
/// layer is charged for (`n` times the kept weights). Exact zeros of `P` are
/// skipped in the arithmetic but still charged, so the count does not depend
/// on the data.
pub(crate) fn sparse_weight_product(p: &DenseMatrix, w_hat: &DenseMatrix, keep: &WeightMask) -> (DenseMatrix, u64) {
    let (n, k) = p.shape();
    let m = w_hat.cols();
    // per weight row: None when fully kept (dense fast path), else kept (col, value)
    let rows: Vec<Option<Vec<(usize, f64)>>> = (0..k)
        .map(|j| {
            let kept: Vec<(usize, f64)> = (0..m)
                .filter(|&i| keep.is_kept(j, i))
                .map(|i| (i, w_hat.get(j, i)))
                .collect();
            if kept.len() == m {
                None
            } else {
                Some(kept)
            }
        })
        .collect();
    let mut out = vec![0.0; n * m];
    if m == 0 {
        return (DenseMatrix::from_raw(n, 0, out), 0);
    }
    let counts: Vec<u64> = out
        .par_chunks_mut(m)
        .enumerate()
        .map(|(r, acc)| {
            let prow = p.row(r);
            let mut macs = 0u64;
            for (j, entry) in rows.iter().enumerate() {
                let pj = prow[j];
                if pj == 0.0 {
                    macs += entry.as_ref().map_or(m, Vec::len) as u64;
                    continue;
                }
                match entry {
                    None => {
                        for (a, w) in acc.iter_mut().zip(w_hat.row(j)) {
                            *a += pj * w;
                        }
                        macs += m as u64;
                    }
                    Some(kept) => {
                        for &(i, w) in kept {
                            acc[i] += pj * w;
                        }
                        macs += kept.len() as u64;
                    }
                }
            }
            macs
        })
        .collect();
    (DenseMatrix::from_raw(n, m, out), counts.iter().sum())
}

/// Adjoint of the masked propagation: `out[v] += T[u,v]·g[u]` over kept
/// entries, plus `g` itself when the skip connection was active.
pub(crate) fn masked_spmm_transpose(t: &CsrGraph, mask: &EdgeMask, g: &DenseMatrix, skip: bool) -> DenseMatrix {
    let mut out = if skip { g.clone() } else { DenseMatrix::zeros(g.rows(), g.cols()) };
    for u in 0..t.n() {
        for pos in t.row_range(u) {
            if !mask.is_kept(pos) {
                continue;
            }
            let w = t.values()[pos];
            let v = t.col_idx()[pos];
            for (o, s) in out.row_mut(v).iter_mut().zip(g.row(u)) {
                *o += w * s;
            }
        }
    }
    out
}
