//! Entry-wise pruning: the message threshold rule for graph edges, its
//! node-wise equivalent, magnitude pruning of weights against embedding
//! column norms, and the monotone per-layer edge mask chain.

use base64::Engine as _;
use bitvec::prelude::*;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::synthetic::rng;

/// Outcome of the pruning function for one entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Drop,
}

/// Keep iff `|x| > delta`; the boundary itself is dropped, so `delta = 0`
/// still removes exact zeros.
#[inline]
pub fn prune_threshold(x: f64, delta: f64) -> Decision {
    if x.abs() > delta {
        Decision::Keep
    } else {
        Decision::Drop
    }
}

#[inline]
fn keeps(x: f64, delta: f64) -> bool {
    prune_threshold(x, delta) == Decision::Keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Threshold the exact message `T[u,v]·p[v]`; single-feature only.
    MessageExact,
    /// Threshold `|T[u,v]|·‖P[v,:]‖₂`, usable for any feature width.
    #[default]
    NodewisePre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub delta_a: f64,
    pub delta_w: f64,
    pub graph_mode: GraphMode,
    pub exempt_self_loops: bool,
    /// Initialize every propagation accumulator with the previous embedding.
    pub skip_connection: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            delta_a: 0.0,
            delta_w: 0.0,
            graph_mode: GraphMode::NodewisePre,
            exempt_self_loops: false,
            skip_connection: true,
        }
    }
}

impl ThresholdPolicy {
    pub fn new(delta_a: f64, delta_w: f64) -> Result<Self> {
        let p = Self {
            delta_a,
            delta_w,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_skip(mut self, skip: bool) -> Self {
        self.skip_connection = skip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta_a", self.delta_a), ("delta_w", self.delta_w)] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name}={v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Keep/drop flag per stored position of a base graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    bits: BitVec<u64, Lsb0>,
}

impl EdgeMask {
    pub fn full(nnz: usize) -> Self {
        Self {
            bits: BitVec::repeat(true, nnz),
        }
    }

    pub fn empty(nnz: usize) -> Self {
        Self {
            bits: BitVec::repeat(false, nnz),
        }
    }

    pub fn from_bools(keep: impl IntoIterator<Item = bool>) -> Self {
        Self {
            bits: keep.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn is_kept(&self, pos: usize) -> bool {
        self.bits[pos]
    }

    pub fn set(&mut self, pos: usize, keep: bool) {
        self.bits.set(pos, keep);
    }

    pub fn kept(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn dropped(&self) -> usize {
        self.bits.count_zeros()
    }

    pub fn kept_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn is_subset_of(&self, other: &EdgeMask) -> bool {
        self.len() == other.len() && self.bits.iter_ones().all(|p| other.bits[p])
    }

    /// Little-endian `u64` bit count followed by the bits packed LSB-first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.len() as u64).to_le_bytes().to_vec();
        let mut byte = 0u8;
        for (i, bit) in self.bits.iter().by_vals().enumerate() {
            if bit {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                out.push(byte);
                byte = 0;
            }
        }
        if !self.len().is_multiple_of(8) {
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header: [u8; 8] = bytes
            .get(..8)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| Error::InvalidParameter("mask shorter than length prefix".into()))?;
        let len = u64::from_le_bytes(header) as usize;
        let body = &bytes[8..];
        if body.len() != len.div_ceil(8) {
            return Err(Error::InvalidParameter(format!(
                "mask body {} bytes, expected {}",
                body.len(),
                len.div_ceil(8)
            )));
        }
        Ok(Self::from_bools((0..len).map(|i| body[i / 8] >> (i % 8) & 1 == 1)))
    }

    fn check_len(&self, t: &CsrGraph) -> Result<()> {
        if self.len() != t.nnz() {
            return Err(Error::DimensionMismatch(format!(
                "mask covers {} positions, graph has {}",
                self.len(),
                t.nnz()
            )));
        }
        Ok(())
    }
}

impl Serialize for EdgeMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for EdgeMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)?;
        EdgeMask::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

/// Per-layer edge masks, each a subset of the one before.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskChain {
    layers: Vec<EdgeMask>,
}

impl MaskChain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a mask, refusing one that re-admits a position dropped earlier.
    pub fn push(&mut self, mask: EdgeMask) -> Result<()> {
        if let Some(last) = self.layers.last() {
            if !mask.is_subset_of(last) {
                return Err(Error::InvalidParameter("mask chain must shrink monotonically".into()));
            }
        }
        self.layers.push(mask);
        Ok(())
    }

    pub fn layers(&self) -> &[EdgeMask] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn last(&self) -> Option<&EdgeMask> {
        self.layers.last()
    }

    pub fn is_monotone(&self) -> bool {
        self.layers.windows(2).all(|w| w[1].is_subset_of(&w[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneStats {
    pub q_a: usize,
    pub eta_a: f64,
    pub q_w: usize,
    pub eta_w: f64,
}

impl PruneStats {
    pub fn edges(mask: &EdgeMask) -> Self {
        let q = mask.dropped();
        Self {
            q_a: q,
            eta_a: ratio(q, mask.len()),
            ..Self::default()
        }
    }

    pub fn weights(pruned: usize, total: usize) -> Self {
        Self {
            q_w: pruned,
            eta_w: ratio(pruned, total),
            ..Self::default()
        }
    }
}

fn ratio(q: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        q as f64 / total as f64
    }
}

/// Node-wise edge rule: `(u,v)` survives iff it survived `prev` and
/// `|T[u,v]|·‖P[v,:]‖₂ > delta_a` (or it is an exempt self-loop).
pub fn sparsify_edges_nodewise(
    t: &CsrGraph,
    p: &DenseMatrix,
    delta_a: f64,
    prev: &EdgeMask,
    exempt_self_loops: bool,
) -> Result<(EdgeMask, PruneStats)> {
    if p.rows() != t.n() {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} rows, graph has {} nodes",
            p.rows(),
            t.n()
        )));
    }
    let norms = p.row_norms();
    edge_rule(t, prev, exempt_self_loops, |v, w| keeps(w.abs() * norms[v], delta_a))
}

/// Exact message rule for a single feature vector: `(u,v)` survives iff
/// `|T[u,v]·p[v]| > delta_a`.
pub fn sparsify_edges_message(
    t: &CsrGraph,
    p: &[f64],
    delta_a: f64,
    prev: &EdgeMask,
    exempt_self_loops: bool,
) -> Result<(EdgeMask, PruneStats)> {
    if p.len() != t.n() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} vs graph n {}",
            p.len(),
            t.n()
        )));
    }
    edge_rule(t, prev, exempt_self_loops, |v, w| keeps(w * p[v], delta_a))
}

fn edge_rule(
    t: &CsrGraph,
    prev: &EdgeMask,
    exempt_self_loops: bool,
    rule: impl Fn(usize, f64) -> bool,
) -> Result<(EdgeMask, PruneStats)> {
    prev.check_len(t)?;
    let mut mask = EdgeMask::empty(t.nnz());
    for u in 0..t.n() {
        for pos in t.row_range(u) {
            if !prev.is_kept(pos) {
                continue;
            }
            let v = t.col_idx()[pos];
            if (exempt_self_loops && u == v) || rule(v, t.values()[pos]) {
                mask.set(pos, true);
            }
        }
    }
    let stats = PruneStats::edges(&mask);
    Ok((mask, stats))
}

/// Restricts a mask to pairs kept in both directions, giving a symmetric
/// pruned operator for symmetric `t`.
pub fn symmetrize_mask(t: &CsrGraph, mask: &EdgeMask) -> Result<EdgeMask> {
    mask.check_len(t)?;
    let mut out = mask.clone();
    for u in 0..t.n() {
        for pos in t.row_range(u) {
            let v = t.col_idx()[pos];
            let back = t.find(v, u).is_some_and(|q| mask.is_kept(q));
            if !back {
                out.set(pos, false);
            }
        }
    }
    Ok(out)
}

/// Exact operation count of a kernel call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCount {
    /// Multiply-adds executed.
    pub macs: u64,
    /// Plain additions (skip-connection initialization).
    pub adds: u64,
}

impl OpCount {
    pub fn flops(&self, flops_per_mac: u64) -> u64 {
        self.macs * flops_per_mac + self.adds
    }
}

impl std::ops::Add for OpCount {
    type Output = OpCount;
    fn add(self, o: OpCount) -> OpCount {
        OpCount {
            macs: self.macs + o.macs,
            adds: self.adds + o.adds,
        }
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, o: OpCount) {
        *self = *self + o;
    }
}

/// Propagation over the kept entries only; see [`masked_spmm_counted`].
pub fn masked_spmm(t: &CsrGraph, mask: &EdgeMask, p: &DenseMatrix, skip_connection: bool) -> Result<DenseMatrix> {
    masked_spmm_counted(t, mask, p, skip_connection).map(|(out, _)| out)
}

/// Row `u` of the result is `Σ_{(u,v) kept} T[u,v]·P[v,:]`, with the
/// accumulator starting from `P[u,:]` when `skip_connection` is set.
/// Accumulation order matches [`crate::graph::spmm`].
pub fn masked_spmm_counted(
    t: &CsrGraph,
    mask: &EdgeMask,
    p: &DenseMatrix,
    skip_connection: bool,
) -> Result<(DenseMatrix, OpCount)> {
    mask.check_len(t)?;
    if t.n() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "masked_spmm: graph n={} but P has {} rows",
            t.n(),
            p.rows()
        )));
    }
    let f = p.cols();
    let mut out = vec![0.0; t.n() * f];
    if f == 0 {
        return Ok((DenseMatrix::from_raw(t.n(), 0, out), OpCount::default()));
    }
    let counts: Vec<u64> = out
        .par_chunks_mut(f)
        .enumerate()
        .map(|(u, acc)| {
            if skip_connection {
                acc.copy_from_slice(p.row(u));
            }
            let mut macs = 0u64;
            for pos in t.row_range(u) {
                if !mask.is_kept(pos) {
                    continue;
                }
                let w = t.values()[pos];
                for (a, x) in acc.iter_mut().zip(p.row(t.col_idx()[pos])) {
                    *a += w * x;
                }
                macs += f as u64;
            }
            macs
        })
        .collect();
    let count = OpCount {
        macs: counts.iter().sum(),
        adds: if skip_connection { (t.n() * f) as u64 } else { 0 },
    };
    Ok((DenseMatrix::from_raw(t.n(), f, out), count))
}

/// Weight rule: `Ŵ[j,i] = W[j,i]` iff `|W[j,i]|·‖P[:,j]‖₂ > delta_w`, else 0.
/// `q_w` counts every zero entry of `Ŵ`.
pub fn sparsify_weights(w: &DenseMatrix, p: &DenseMatrix, delta_w: f64) -> Result<(DenseMatrix, PruneStats)> {
    if w.rows() != p.cols() {
        return Err(Error::DimensionMismatch(format!(
            "weight has {} rows but embedding has {} columns",
            w.rows(),
            p.cols()
        )));
    }
    let norms = p.col_norms();
    let mut out = w.clone();
    let mut pruned = 0;
    for (j, &norm) in norms.iter().enumerate() {
        for x in out.row_mut(j) {
            if !keeps(x.abs() * norm, delta_w) {
                *x = 0.0;
                pruned += 1;
            }
        }
    }
    let total = w.rows() * w.cols();
    Ok((out, PruneStats::weights(pruned, total)))
}

/// Uniform random control: drops exactly `round(eta·nnz)` positions.
pub fn random_mask(nnz: usize, eta: f64, seed: u64) -> Result<EdgeMask> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta={eta} outside [0,1]")));
    }
    let drop = ((eta * nnz as f64).round() as usize).min(nnz);
    let mut mask = EdgeMask::full(nnz);
    for pos in sample(&mut rng(seed), nnz, drop).iter() {
        mask.set(pos, false);
    }
    Ok(mask)
}
