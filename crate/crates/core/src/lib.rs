//! Entry-wise sparsification of graph propagation and weight transformation
//! for graph neural networks, with exact operation accounting.

pub mod bundle;
pub mod dense;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod propagate;
pub mod sparsify;
pub mod synthetic;
pub mod theory;

pub use bundle::{load_bundle, Bundle, BundleMeta, Splits};
pub use dense::{dense_matmul, dense_solve, DenseMatrix};
pub use error::{Error, Result};
pub use gnn::{forward_sparsified, mlp_forward, train, GcnModel, TrainConfig};
pub use graph::{spmm, CsrGraph, DegreeVector};
pub use metrics::{accuracy, count_prop_flops, RunReport};
pub use propagate::{propagate, smoothing_iteration, PropagationScheme, PropagationTrace, SchemeKind};
pub use sparsify::{
    masked_spmm, prune_threshold, random_mask, sparsify_edges_nodewise, sparsify_weights, EdgeMask, GraphMode,
    MaskChain, PruneStats, ThresholdPolicy,
};
