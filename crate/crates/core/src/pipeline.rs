//! End-to-end runs on a bundle and threshold sweeps over them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::gnn::{forward_impl, train, FrozenMasks, GcnModel, TrainConfig};
use crate::metrics::{LayerReport, RunReport, Stage};
use crate::propagate::{propagate, PropagationScheme, PropagationTrace, SchemeKind};
use crate::sparsify::ThresholdPolicy;

/// Environment variable bounding the worker threads of sweeps and kernels.
pub const THREADS_ENV: &str = "UNIFEWS_THREADS";

/// Propagation settings of a decoupled model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoupledConfig {
    pub scheme: SchemeKind,
    pub hops: usize,
    pub alpha: f64,
    /// Normalization exponent of `D^{r-1} Ā D^{-r}`.
    pub r: f64,
}

impl Default for DecoupledConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::Sgc,
            hops: 2,
            alpha: 0.1,
            r: 0.5,
        }
    }
}

impl DecoupledConfig {
    pub fn scheme(&self) -> Result<PropagationScheme> {
        let s = match self.scheme {
            SchemeKind::Sgc => PropagationScheme::sgc(self.hops),
            SchemeKind::Appnp => PropagationScheme::appnp(self.hops, self.alpha),
            SchemeKind::GenericSmoothing => {
                return Err(Error::InvalidParameter("decoupled runs use sgc or appnp".into()));
            }
        };
        s.validate()?;
        Ok(s)
    }
}

fn initial_model(bundle: &Bundle, in_dim: usize, cfg: &TrainConfig) -> Result<GcnModel> {
    let dims = GcnModel::dims_for(in_dim, cfg.hidden_width, bundle.meta.num_classes, cfg.layer_depth);
    GcnModel::glorot(&dims, cfg.bias, cfg.seed)
}

/// Iterative GCN trained with joint edge and weight sparsification.
pub fn run_iterative(bundle: &Bundle, cfg: &TrainConfig, policy: &ThresholdPolicy, r: f64) -> Result<RunReport> {
    let t = bundle.propagation_matrix(r)?;
    let model = initial_model(bundle, bundle.meta.f, cfg)?;
    let (_, mut report) = train(&model, Some(&t), &bundle.features, &bundle.labels, &bundle.splits, cfg, policy)?;
    report.dataset = bundle.meta.name.clone();
    report.config = serde_json::json!({
        "model": "iterative",
        "r": r,
        "train": cfg,
        "policy": policy,
    });
    Ok(report)
}

/// Decoupled model: sparsified propagation of the features, then a
/// weight-pruned MLP trained on the propagated embedding.
pub fn run_decoupled(
    bundle: &Bundle,
    prop: &DecoupledConfig,
    cfg: &TrainConfig,
    policy: &ThresholdPolicy,
) -> Result<(RunReport, PropagationTrace)> {
    let started = std::time::Instant::now();
    let t = bundle.propagation_matrix(prop.r)?;
    let scheme = prop.scheme()?;
    let trace = propagate(&t, &bundle.features, &scheme, policy)?;
    let model = initial_model(bundle, bundle.meta.f, cfg)?;
    let (_, trained) = train(&model, None, &trace.embedding, &bundle.labels, &bundle.splits, cfg, policy)?;

    let mut layers: Vec<LayerReport> = trace
        .hops
        .iter()
        .map(|h| LayerReport {
            stage: Stage::Propagation,
            eta_a: h.eta_a,
            eta_w: 0.0,
            prop_flops: h.flops,
            trans_flops: 0,
        })
        .collect();
    layers.extend(trained.layers.iter().copied());
    let config = serde_json::json!({
        "model": "decoupled",
        "propagation": prop,
        "train": cfg,
        "policy": policy,
        "hops": trace.hops_json(),
    });
    let mut report = RunReport::new(bundle.meta.name.clone(), config, cfg.seed, layers);
    report.accuracy = trained.accuracy;
    report.epochs = trained.epochs;
    report.masks = (!trace.masks.is_empty()).then(|| trace.masks.clone());
    report.wall_time_ms = started.elapsed().as_millis() as u64;
    Ok((report, trace))
}

/// Smallest `δ` such that a fraction of at least `q` of `scores` is `≤ δ`,
/// i.e. would be pruned by a strict `> δ` keep rule.
pub fn prune_quantile(scores: &mut [f64], q: f64) -> f64 {
    if scores.is_empty() || q <= 0.0 {
        return 0.0;
    }
    scores.sort_unstable_by(f64::total_cmp);
    let k = ((q.min(1.0) * scores.len() as f64).ceil() as usize).max(1);
    scores[k - 1]
}

/// Thresholds aiming at target sparsities for an iterative run, chosen from
/// the score distributions of the untrained model: message scores
/// `|T[u,v]|·‖X[v]‖` of the first layer and weight scores `|W[j,i]|·‖P[:,j]‖`
/// pooled over all layers. Measured sparsity after training will differ.
pub fn calibrate_thresholds(bundle: &Bundle, cfg: &TrainConfig, r: f64, eta_a: f64, eta_w: f64) -> Result<ThresholdPolicy> {
    let t = bundle.propagation_matrix(r)?;
    let norms = bundle.features.row_norms();
    let mut edge_scores: Vec<f64> = (0..t.n())
        .flat_map(|u| t.row_range(u))
        .map(|pos| t.values()[pos].abs() * norms[t.col_idx()[pos]])
        .collect();
    let delta_a = prune_quantile(&mut edge_scores, eta_a);

    let model = initial_model(bundle, bundle.meta.f, cfg)?;
    let probe = ThresholdPolicy::new(delta_a, 0.0)?;
    let state = forward_impl(&model, Some(&t), &bundle.features, &probe, &FrozenMasks::default(), cfg.flops_per_mac)?;
    let mut weight_scores = Vec::new();
    for (layer, cache) in model.layers.iter().zip(&state.caches) {
        let col_norms = cache.propagated.col_norms();
        for j in 0..layer.in_dim {
            for i in 0..layer.out_dim {
                weight_scores.push(layer.weight.get(j, i).abs() * col_norms[j]);
            }
        }
    }
    let delta_w = prune_quantile(&mut weight_scores, eta_w);
    ThresholdPolicy::new(delta_a, delta_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Iterative,
    Decoupled,
}

/// Grid description read from a sweep JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub delta_a: Vec<f64>,
    pub delta_w: Vec<f64>,
    pub skip_connection: bool,
    pub r: f64,
    pub train: TrainConfig,
    pub decoupled: DecoupledConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Iterative,
            delta_a: vec![0.0],
            delta_w: vec![0.0],
            skip_connection: true,
            r: 0.5,
            train: TrainConfig::default(),
            decoupled: DecoupledConfig::default(),
        }
    }
}

impl SweepConfig {
    /// Grid points in row-major order over `(delta_a, delta_w)`.
    pub fn points(&self) -> Result<Vec<ThresholdPolicy>> {
        if self.delta_a.is_empty() || self.delta_w.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        let mut out = Vec::with_capacity(self.delta_a.len() * self.delta_w.len());
        for &da in &self.delta_a {
            for &dw in &self.delta_w {
                out.push(ThresholdPolicy::new(da, dw)?.with_skip(self.skip_connection));
            }
        }
        Ok(out)
    }

    pub fn run_point(&self, bundle: &Bundle, policy: &ThresholdPolicy) -> Result<RunReport> {
        match self.model {
            ModelKind::Iterative => run_iterative(bundle, &self.train, policy, self.r),
            ModelKind::Decoupled => {
                let prop = DecoupledConfig { r: self.r, ..self.decoupled };
                run_decoupled(bundle, &prop, &self.train, policy).map(|(r, _)| r)
            }
        }
    }
}

/// One CSV line of a sweep. Wall time is left out so files are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta_a: f64,
    pub delta_w: f64,
    pub eta_a: f64,
    pub eta_w: f64,
    pub prop_flops: u64,
    pub trans_flops: u64,
    pub flops: u64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

impl SweepRow {
    pub fn of(policy: &ThresholdPolicy, report: &RunReport) -> Self {
        Self {
            delta_a: policy.delta_a,
            delta_w: policy.delta_w,
            eta_a: report.totals.eta_a,
            eta_w: report.totals.eta_w,
            prop_flops: report.totals.prop_flops,
            trans_flops: report.totals.trans_flops,
            flops: report.totals.flops,
            train_acc: report.accuracy.train,
            val_acc: report.accuracy.val,
            test_acc: report.accuracy.test,
        }
    }
}

/// Runs every grid point in parallel on the current thread pool. Reports
/// come back in grid order.
pub fn sweep(bundle: &Bundle, cfg: &SweepConfig) -> Result<Vec<(ThresholdPolicy, RunReport)>> {
    let points = cfg.points()?;
    points
        .into_par_iter()
        .map(|p| cfg.run_point(bundle, &p).map(|r| (p, r)))
        .collect()
}

pub fn sweep_csv(results: &[(ThresholdPolicy, RunReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (p, r) in results {
        w.serialize(SweepRow::of(p, r))
            .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Thread pool sized by [`THREADS_ENV`], or rayon's default when unset.
pub fn thread_pool_from_env() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

