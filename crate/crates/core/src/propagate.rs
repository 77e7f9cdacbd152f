//! Multi-hop sparsified propagation for decoupled models.
//!
//! Every hop first shrinks the inherited edge mask against the embedding that
//! is about to be propagated, then runs the masked product on the survivors.
//! Hop FLOPs are taken from the kernel counters, never estimated.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::sparsify::{
    masked_spmm_counted, sparsify_edges_message, sparsify_edges_nodewise, EdgeMask, GraphMode, MaskChain, OpCount,
    PruneStats, ThresholdPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Sgc,
    Appnp,
    GenericSmoothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationScheme {
    pub kind: SchemeKind,
    pub hops: usize,
    /// Teleport weight, APPNP only.
    pub alpha: f64,
    /// Step, gradient-descent smoothing only.
    pub b: f64,
    /// Regularization strength, gradient-descent smoothing only.
    pub c: f64,
}

impl PropagationScheme {
    pub fn sgc(hops: usize) -> Self {
        Self {
            kind: SchemeKind::Sgc,
            hops,
            alpha: 0.0,
            b: 0.0,
            c: 0.0,
        }
    }

    pub fn appnp(hops: usize, alpha: f64) -> Self {
        Self {
            kind: SchemeKind::Appnp,
            alpha,
            ..Self::sgc(hops)
        }
    }

    pub fn smoothing(hops: usize, b: f64, c: f64) -> Self {
        Self {
            kind: SchemeKind::GenericSmoothing,
            b,
            c,
            ..Self::sgc(hops)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::InvalidParameter("hops must be positive".into()));
        }
        match self.kind {
            SchemeKind::Sgc => Ok(()),
            SchemeKind::Appnp if self.alpha > 0.0 && self.alpha <= 1.0 => Ok(()),
            SchemeKind::Appnp => Err(Error::InvalidParameter(format!("alpha={} outside (0,1]", self.alpha))),
            SchemeKind::GenericSmoothing if self.b > 0.0 && self.b <= 1.0 && self.c >= 0.0 => Ok(()),
            SchemeKind::GenericSmoothing => Err(Error::InvalidParameter(format!(
                "smoothing needs b in (0,1] and c >= 0, got b={} c={}",
                self.b, self.c
            ))),
        }
    }

    /// Number of masked products the scheme performs. APPNP sums the terms
    /// `α(1−α)^l T^l X` for `l < hops`, which needs one product fewer.
    pub fn propagation_steps(&self) -> usize {
        match self.kind {
            SchemeKind::Appnp => self.hops - 1,
            _ => self.hops,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub hop: usize,
    pub kept_edges: usize,
    pub eta_a: f64,
    pub flops: u64,
}

#[derive(Debug, Clone)]
pub struct PropagationTrace {
    pub hops: Vec<HopRecord>,
    pub stats: Vec<PruneStats>,
    pub ops: Vec<OpCount>,
    pub masks: MaskChain,
    pub embedding: DenseMatrix,
    /// Output after 0, 1, … steps, when requested.
    pub snapshots: Vec<DenseMatrix>,
}

impl PropagationTrace {
    pub fn total_flops(&self) -> u64 {
        self.hops.iter().map(|h| h.flops).sum()
    }

    pub fn mean_eta_a(&self) -> f64 {
        if self.stats.is_empty() {
            0.0
        } else {
            self.stats.iter().map(|s| s.eta_a).sum::<f64>() / self.stats.len() as f64
        }
    }

    pub fn hops_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.hops).expect("plain records serialize")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    pub keep_snapshots: bool,
    pub flops_per_mac: u64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            keep_snapshots: false,
            flops_per_mac: 2,
        }
    }
}

pub fn propagate(t: &CsrGraph, x: &DenseMatrix, scheme: &PropagationScheme, policy: &ThresholdPolicy) -> Result<PropagationTrace> {
    propagate_with(t, x, scheme, policy, PropagateOptions::default())
}

pub fn propagate_with(
    t: &CsrGraph,
    x: &DenseMatrix,
    scheme: &PropagationScheme,
    policy: &ThresholdPolicy,
    opts: PropagateOptions,
) -> Result<PropagationTrace> {
    scheme.validate()?;
    policy.validate()?;
    if x.rows() != t.n() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} rows, graph has {} nodes",
            x.rows(),
            t.n()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFiniteHop { hop: 0 });
    }
    let laplacian = match scheme.kind {
        SchemeKind::GenericSmoothing => {
            if !t.has_self_loops() {
                return Err(Error::InvalidGraph("smoothing propagation needs a self-looped diffusion".into()));
            }
            Some(t.laplacian())
        }
        _ => None,
    };

    let mut trace = PropagationTrace {
        hops: Vec::new(),
        stats: Vec::new(),
        ops: Vec::new(),
        masks: MaskChain::new(),
        embedding: x.clone(),
        snapshots: Vec::new(),
    };

    // `current` is what gets multiplied by T; `output` is what the scheme emits.
    let mut current = x.clone();
    let mut output = match scheme.kind {
        SchemeKind::Appnp => x.scale(scheme.alpha),
        _ => x.clone(),
    };
    if opts.keep_snapshots {
        trace.snapshots.push(output.clone());
    }
    let mut prev = EdgeMask::full(t.nnz());

    for hop in 0..scheme.propagation_steps() {
        let (mask, stats) = edge_mask(t, &current, policy, &prev)?;
        let (next, ops) = match scheme.kind {
            SchemeKind::Sgc | SchemeKind::Appnp => masked_spmm_counted(t, &mask, &current, policy.skip_connection)?,
            SchemeKind::GenericSmoothing => smoothing_iteration_counted(
                laplacian.as_ref().expect("built above"),
                &current,
                x,
                scheme.b,
                scheme.c,
                &mask,
            )?,
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteHop { hop });
        }
        current = next;
        match scheme.kind {
            SchemeKind::Appnp => {
                let weight = scheme.alpha * (1.0 - scheme.alpha).powi(hop as i32 + 1);
                output.axpy(weight, &current)?;
                if !output.is_finite() {
                    return Err(Error::NonFiniteHop { hop });
                }
            }
            _ => output = current.clone(),
        }
        if opts.keep_snapshots {
            trace.snapshots.push(output.clone());
        }
        trace.hops.push(HopRecord {
            hop,
            kept_edges: mask.kept(),
            eta_a: stats.eta_a,
            flops: ops.flops(opts.flops_per_mac),
        });
        trace.stats.push(stats);
        trace.ops.push(ops);
        trace.masks.push(mask.clone())?;
        prev = mask;
    }
    trace.embedding = output;
    Ok(trace)
}

fn edge_mask(t: &CsrGraph, current: &DenseMatrix, policy: &ThresholdPolicy, prev: &EdgeMask) -> Result<(EdgeMask, PruneStats)> {
    match policy.graph_mode {
        GraphMode::NodewisePre => sparsify_edges_nodewise(t, current, policy.delta_a, prev, policy.exempt_self_loops),
        GraphMode::MessageExact if current.cols() == 1 => {
            sparsify_edges_message(t, current.data(), policy.delta_a, prev, policy.exempt_self_loops)
        }
        GraphMode::MessageExact => Err(Error::InvalidParameter(
            "exact message mode supports a single feature column only".into(),
        )),
    }
}

/// One gradient step on the smoothing objective:
/// `(1−b)·p − b·c·L̂·p + b·x`, where `L̂` drops masked off-diagonal entries and
/// always keeps the diagonal.
pub fn smoothing_iteration(
    laplacian: &CsrGraph,
    p: &DenseMatrix,
    x: &DenseMatrix,
    b: f64,
    c: f64,
    mask: &EdgeMask,
) -> Result<DenseMatrix> {
    smoothing_iteration_counted(laplacian, p, x, b, c, mask).map(|(out, _)| out)
}

/// As [`smoothing_iteration`], also returning the multiply-adds of the
/// Laplacian product.
pub fn smoothing_iteration_counted(
    laplacian: &CsrGraph,
    p: &DenseMatrix,
    x: &DenseMatrix,
    b: f64,
    c: f64,
    mask: &EdgeMask,
) -> Result<(DenseMatrix, OpCount)> {
    let n = laplacian.n();
    if p.rows() != n || x.shape() != p.shape() {
        return Err(Error::DimensionMismatch(format!(
            "smoothing: n={n}, p {:?}, x {:?}",
            p.shape(),
            x.shape()
        )));
    }
    if mask.len() != laplacian.nnz() {
        return Err(Error::DimensionMismatch(format!(
            "mask covers {} positions, Laplacian has {}",
            mask.len(),
            laplacian.nnz()
        )));
    }
    let f = p.cols();
    let mut out = DenseMatrix::zeros(n, f);
    let mut macs = 0u64;
    let mut lp = vec![0.0; f];
    for u in 0..n {
        lp.iter_mut().for_each(|v| *v = 0.0);
        for pos in laplacian.row_range(u) {
            let v = laplacian.col_idx()[pos];
            if v != u && !mask.is_kept(pos) {
                continue;
            }
            let w = laplacian.values()[pos];
            for (acc, pv) in lp.iter_mut().zip(p.row(v)) {
                *acc += w * pv;
            }
            macs += f as u64;
        }
        let (pu, xu) = (p.row(u), x.row(u));
        for (k, o) in out.row_mut(u).iter_mut().enumerate() {
            *o = (1.0 - b) * pu[k] - b * c * lp[k] + b * xu[k];
        }
    }
    Ok((out, OpCount { macs, adds: 0 }))
}
