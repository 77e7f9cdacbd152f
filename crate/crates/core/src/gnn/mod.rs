//! Iterative GCN with joint edge and weight sparsification, the dense
//! transform stage used by decoupled models, and a small training loop.

pub mod checkpoint;
mod forward;
mod model;
mod train;

pub(crate) use forward::forward_impl;
pub use forward::{forward_sparsified, mlp_forward, ForwardTrace, FrozenMasks, LayerTrace, WeightMask};
pub use model::{GcnModel, LayerSpec};
pub use train::{
    layer_reports, masks_of, train, EdgeMaskMode, Evaluation, Gradients, Objective, Optimizer, TrainConfig,
    WeightPruneSchedule,
};
