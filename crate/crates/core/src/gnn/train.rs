//! Full-batch training with manual backpropagation through the masked
//! operators. Masks are constants within a step: pruned edges and weights
//! receive exactly zero gradient and are never touched by the optimizer.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::forward::{forward_impl, masked_spmm_transpose, ForwardState, ForwardTrace, FrozenMasks, WeightMask};
use super::model::GcnModel;
use crate::bundle::Splits;
use crate::dense::{dense_matmul, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::metrics::{accuracy, Accuracy, EpochRecord, LayerReport, RunReport, Stage, DEFAULT_FLOPS_PER_MAC};
use crate::sparsify::ThresholdPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMaskMode {
    /// Thresholds re-evaluated on every forward pass.
    #[default]
    Recompute,
    /// Masks from the first epoch are reused for the rest of training.
    FreezeAfterFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

/// When weight pruning is active. The threshold itself comes from the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct WeightPruneSchedule {
    /// Epochs before this train without weight pruning.
    pub start_epoch: usize,
    /// Weight masks computed at this epoch are kept for all later epochs.
    pub freeze_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub hidden_width: usize,
    pub layer_depth: usize,
    pub weight_prune: WeightPruneSchedule,
    pub edge_masks: EdgeMaskMode,
    pub optimizer: Optimizer,
    pub bias: bool,
    pub flops_per_mac: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            seed: 0,
            hidden_width: 512,
            layer_depth: 2,
            weight_prune: WeightPruneSchedule::default(),
            edge_masks: EdgeMaskMode::Recompute,
            optimizer: Optimizer::Adam,
            bias: false,
            flops_per_mac: DEFAULT_FLOPS_PER_MAC,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::InvalidParameter("learning rate must be >= 0".into()));
        }
        if self.layer_depth == 0 {
            return Err(Error::InvalidParameter("depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Option<Vec<f64>>>,
}

/// Softmax cross-entropy over the training nodes plus `wd/2·‖Ŵ‖²`.
pub struct Objective<'a> {
    pub graph: Option<&'a CsrGraph>,
    pub features: &'a DenseMatrix,
    pub labels: &'a [i32],
    pub train_ids: &'a [usize],
    pub policy: ThresholdPolicy,
    pub weight_decay: f64,
    pub flops_per_mac: u64,
}

pub struct Evaluation {
    pub loss: f64,
    pub grads: Gradients,
    pub trace: ForwardTrace,
}

impl Objective<'_> {
    pub fn forward(&self, model: &GcnModel, frozen: &FrozenMasks) -> Result<ForwardTrace> {
        forward_impl(model, self.graph, self.features, &self.policy, frozen, self.flops_per_mac).map(|s| s.trace)
    }

    pub fn loss(&self, model: &GcnModel, frozen: &FrozenMasks) -> Result<f64> {
        let state = forward_impl(model, self.graph, self.features, &self.policy, frozen, self.flops_per_mac)?;
        let (ce, _) = softmax_cross_entropy(&state.trace.logits, self.labels, self.train_ids)?;
        Ok(ce + self.regularizer(&state))
    }

    pub fn evaluate(&self, model: &GcnModel, frozen: &FrozenMasks) -> Result<Evaluation> {
        let state = forward_impl(model, self.graph, self.features, &self.policy, frozen, self.flops_per_mac)?;
        let (ce, dlogits) = softmax_cross_entropy(&state.trace.logits, self.labels, self.train_ids)?;
        let loss = ce + self.regularizer(&state);
        let grads = backward(model, self.graph, &state, dlogits, self.policy.skip_connection, self.weight_decay);
        Ok(Evaluation {
            loss,
            grads,
            trace: state.trace,
        })
    }

    fn regularizer(&self, state: &ForwardState) -> f64 {
        let sq: f64 = state
            .caches
            .iter()
            .map(|c| c.w_hat.data().iter().map(|v| v * v).sum::<f64>())
            .sum();
        0.5 * self.weight_decay * sq
    }
}

/// Masks realized by a forward pass, for replaying it exactly.
pub fn masks_of(trace: &ForwardTrace) -> FrozenMasks {
    FrozenMasks {
        edges: (!trace.edge_masks.is_empty()).then(|| trace.edge_masks.layers().to_vec()),
        weights: Some(trace.weight_masks.clone()),
    }
}

fn softmax_cross_entropy(logits: &DenseMatrix, labels: &[i32], ids: &[usize]) -> Result<(f64, DenseMatrix)> {
    if ids.is_empty() {
        return Err(Error::InvalidParameter("empty training split".into()));
    }
    let c = logits.cols();
    let mut grad = DenseMatrix::zeros(logits.rows(), c);
    let scale = 1.0 / ids.len() as f64;
    let mut loss = 0.0;
    for &id in ids {
        let y = labels
            .get(id)
            .copied()
            .filter(|&y| y >= 0 && (y as usize) < c)
            .ok_or_else(|| Error::InvalidParameter(format!("training node {id} has no valid label")))?
            as usize;
        let row = logits.row(id);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += (log_z - row[y]) * scale;
        let g = grad.row_mut(id);
        for (k, gk) in g.iter_mut().enumerate() {
            let prob = (row[k] - log_z).exp();
            *gk = (prob - if k == y { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss, grad))
}

fn backward(
    model: &GcnModel,
    graph: Option<&CsrGraph>,
    state: &ForwardState,
    dlogits: DenseMatrix,
    skip: bool,
    weight_decay: f64,
) -> Gradients {
    let depth = model.depth();
    let mut weights = vec![DenseMatrix::zeros(0, 0); depth];
    let mut biases = vec![None; depth];
    let mut upstream = dlogits;
    for li in (0..depth).rev() {
        let cache = &state.caches[li];
        let wmask = &state.trace.weight_masks[li];
        let mut dz = upstream;
        if li + 1 < depth {
            for (g, z) in dz.data_mut().iter_mut().zip(cache.pre.data()) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let mut dw = dense_matmul(&cache.propagated.transpose(), &dz).expect("shapes chain");
        let (rows, cols) = dw.shape();
        for j in 0..rows {
            for i in 0..cols {
                let g = if wmask.is_kept(j, i) {
                    dw.get(j, i) + weight_decay * cache.w_hat.get(j, i)
                } else {
                    0.0
                };
                dw.set(j, i, g);
            }
        }
        weights[li] = dw;
        if model.layers[li].bias.is_some() {
            let mut db = vec![0.0; dz.cols()];
            for r in 0..dz.rows() {
                for (b, g) in db.iter_mut().zip(dz.row(r)) {
                    *b += g;
                }
            }
            biases[li] = Some(db);
        }
        if li == 0 {
            break;
        }
        let dp = dense_matmul(&dz, &cache.w_hat.transpose()).expect("shapes chain");
        upstream = match graph {
            Some(t) => masked_spmm_transpose(t, &state.trace.edge_masks.layers()[li], &dp, skip),
            None => dp,
        };
    }
    Gradients { weights, biases }
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    mb: Vec<Vec<f64>>,
    vb: Vec<Vec<f64>>,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(model: &GcnModel) -> Self {
        Self {
            m: model.layers.iter().map(|l| vec![0.0; l.weight.data().len()]).collect(),
            v: model.layers.iter().map(|l| vec![0.0; l.weight.data().len()]).collect(),
            mb: model.layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
            vb: model.layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
            step: 0,
        }
    }
}

fn apply_update(
    model: &mut GcnModel,
    grads: &Gradients,
    masks: &[WeightMask],
    cfg: &TrainConfig,
    adam: &mut AdamState,
) {
    adam.step += 1;
    let lr = cfg.learning_rate;
    let bc1 = 1.0 - BETA1.powi(adam.step);
    let bc2 = 1.0 - BETA2.powi(adam.step);
    for (li, layer) in model.layers.iter_mut().enumerate() {
        let cols = layer.out_dim;
        let g = grads.weights[li].data();
        let w = layer.weight.data_mut();
        for idx in 0..w.len() {
            if !masks[li].is_kept(idx / cols, idx % cols) {
                continue;
            }
            match cfg.optimizer {
                Optimizer::Sgd => w[idx] -= lr * g[idx],
                Optimizer::Adam => {
                    let m = &mut adam.m[li][idx];
                    let v = &mut adam.v[li][idx];
                    *m = BETA1 * *m + (1.0 - BETA1) * g[idx];
                    *v = BETA2 * *v + (1.0 - BETA2) * g[idx] * g[idx];
                    w[idx] -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                }
            }
        }
        if let (Some(b), Some(gb)) = (layer.bias.as_mut(), grads.biases[li].as_ref()) {
            for k in 0..b.len() {
                match cfg.optimizer {
                    Optimizer::Sgd => b[k] -= lr * gb[k],
                    Optimizer::Adam => {
                        let m = &mut adam.mb[li][k];
                        let v = &mut adam.vb[li][k];
                        *m = BETA1 * *m + (1.0 - BETA1) * gb[k];
                        *v = BETA2 * *v + (1.0 - BETA2) * gb[k] * gb[k];
                        b[k] -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Trains `model` full-batch and returns the best-validation snapshot with
/// its report. Pass `graph = None` to train the transform stage of a
/// decoupled model on precomputed embeddings.
pub fn train(
    model: &GcnModel,
    graph: Option<&CsrGraph>,
    features: &DenseMatrix,
    labels: &[i32],
    splits: &Splits,
    cfg: &TrainConfig,
    policy: &ThresholdPolicy,
) -> Result<(GcnModel, RunReport)> {
    cfg.validate()?;
    policy.validate()?;
    model.validate()?;
    let started = Instant::now();
    let mut model = model.clone();
    let mut adam = AdamState::new(&model);
    let mut frozen = FrozenMasks::default();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, GcnModel, FrozenMasks, ThresholdPolicy)> = None;

    for epoch in 0..cfg.epochs {
        let mut eff = *policy;
        if epoch < cfg.weight_prune.start_epoch {
            eff.delta_w = 0.0;
        }
        let objective = Objective {
            graph,
            features,
            labels,
            train_ids: &splits.train,
            policy: eff,
            weight_decay: cfg.weight_decay,
            flops_per_mac: cfg.flops_per_mac,
        };
        let eval = objective.evaluate(&model, &frozen)?;
        if !eval.loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: eval.loss });
        }
        let trace = &eval.trace;
        let val_acc = if splits.val.is_empty() {
            0.0
        } else {
            accuracy(&trace.logits, labels, &splits.val)?
        };
        epochs.push(EpochRecord {
            epoch,
            loss: eval.loss,
            val_acc,
            eta_a: trace.layers.iter().map(|l| l.eta_a).collect(),
            eta_w: trace.layers.iter().map(|l| l.eta_w).collect(),
            flops: trace.prop_flops() + trace.trans_flops(),
        });
        // Without a validation split the latest model wins.
        if splits.val.is_empty() || best.as_ref().is_none_or(|b| val_acc > b.0) {
            best = Some((val_acc, model.clone(), frozen.clone(), eff));
        }

        if cfg.edge_masks == EdgeMaskMode::FreezeAfterFirst && frozen.edges.is_none() && graph.is_some() {
            frozen.edges = Some(trace.edge_masks.layers().to_vec());
        }
        if cfg.weight_prune.freeze_epoch == Some(epoch) {
            frozen.weights = Some(trace.weight_masks.clone());
        }
        apply_update(&mut model, &eval.grads, &trace.weight_masks, cfg, &mut adam);
        if model.layers.iter().any(|l| !l.weight.is_finite()) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
    }

    let (_, best_model, best_frozen, best_policy) = best.expect("at least one epoch");
    let final_trace = forward_impl(&best_model, graph, features, &best_policy, &best_frozen, cfg.flops_per_mac)?.trace;
    let acc_or_zero = |ids: &[usize]| -> Result<f64> {
        if ids.is_empty() {
            Ok(0.0)
        } else {
            accuracy(&final_trace.logits, labels, ids)
        }
    };
    let layers = layer_reports(&final_trace);
    let config = serde_json::json!({ "train": cfg, "policy": policy });
    let mut report = RunReport::new("", config, cfg.seed, layers);
    report.accuracy = Accuracy {
        train: acc_or_zero(&splits.train)?,
        val: acc_or_zero(&splits.val)?,
        test: acc_or_zero(&splits.test)?,
    };
    report.epochs = epochs;
    report.wall_time_ms = started.elapsed().as_millis() as u64;
    if !final_trace.edge_masks.is_empty() {
        report.masks = Some(final_trace.edge_masks.clone());
    }
    Ok((best_model, report))
}

pub fn layer_reports(trace: &ForwardTrace) -> Vec<LayerReport> {
    trace
        .layers
        .iter()
        .map(|l| LayerReport {
            stage: if trace.edge_masks.is_empty() { Stage::Transform } else { Stage::Joint },
            eta_a: l.eta_a,
            eta_w: l.eta_w,
            prop_flops: l.prop_flops,
            trans_flops: l.trans_flops,
        })
        .collect()
}
