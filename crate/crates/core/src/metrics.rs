//! Operation accounting, accuracy, and the serialized run report.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparsify::MaskChain;

/// FLOPs charged per multiply-add. One MAC is counted as two FLOPs.
pub const DEFAULT_FLOPS_PER_MAC: u64 = 2;

/// Closed-form propagation FLOPs of a mask chain: `Σ_l flops_per_mac·|E_l|·f`.
pub fn count_prop_flops(chain: &MaskChain, f: usize) -> u64 {
    count_prop_flops_with(chain, f, DEFAULT_FLOPS_PER_MAC)
}

pub fn count_prop_flops_with(chain: &MaskChain, f: usize, flops_per_mac: u64) -> u64 {
    chain
        .layers()
        .iter()
        .map(|m| flops_per_mac * (m.kept() * f) as u64)
        .sum()
}

/// Fraction of `ids` whose argmax score matches the label. Ties go to the
/// lowest class index.
pub fn accuracy(logits: &DenseMatrix, labels: &[i32], ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::InvalidParameter("accuracy over an empty split".into()));
    }
    let mut hits = 0usize;
    for &id in ids {
        if id >= logits.rows() || id >= labels.len() {
            return Err(Error::InvalidParameter(format!("split id {id} out of range")));
        }
        if labels[id] < 0 {
            return Err(Error::InvalidParameter(format!("split id {id} is unlabeled")));
        }
        if argmax(logits.row(id)) == labels[id] as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / ids.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Which operations a reported layer performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Propagation followed by a weight transform (iterative models).
    #[default]
    Joint,
    /// A propagation hop of a decoupled model.
    Propagation,
    /// A transform layer of a decoupled model.
    Transform,
}

impl Stage {
    fn propagates(self) -> bool {
        self != Stage::Transform
    }

    fn transforms(self) -> bool {
        self != Stage::Propagation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerReport {
    #[serde(default)]
    pub stage: Stage,
    pub eta_a: f64,
    pub eta_w: f64,
    pub prop_flops: u64,
    pub trans_flops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    /// Mean over the layers that propagate.
    pub eta_a: f64,
    /// Mean over the layers that transform.
    pub eta_w: f64,
    pub prop_flops: u64,
    pub trans_flops: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub eta_a: Vec<f64>,
    pub eta_w: Vec<f64>,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub layers: Vec<LayerReport>,
    pub totals: Totals,
    pub accuracy: Accuracy,
    pub wall_time_ms: u64,
    #[serde(default)]
    pub epochs: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<MaskChain>,
}

impl RunReport {
    pub fn new(dataset: impl Into<String>, config: serde_json::Value, seed: u64, layers: Vec<LayerReport>) -> Self {
        let totals = totals_of(&layers);
        Self {
            dataset: dataset.into(),
            config,
            seed,
            layers,
            totals,
            accuracy: Accuracy::default(),
            wall_time_ms: 0,
            epochs: Vec::new(),
            masks: None,
        }
    }

    /// Checks that totals reconcile with the per-layer entries and accuracies are fractions.
    pub fn validate(&self) -> Result<()> {
        let expect = totals_of(&self.layers);
        if expect != self.totals {
            return Err(Error::InvalidParameter(format!(
                "report totals {:?} do not match layers {:?}",
                self.totals, expect
            )));
        }
        let acc = self.accuracy;
        if [acc.train, acc.val, acc.test].iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter("accuracy outside [0,1]".into()));
        }
        Ok(())
    }
}

fn totals_of(layers: &[LayerReport]) -> Totals {
    let mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let prop: u64 = layers.iter().map(|l| l.prop_flops).sum();
    let trans: u64 = layers.iter().map(|l| l.trans_flops).sum();
    Totals {
        eta_a: mean(layers.iter().filter(|l| l.stage.propagates()).map(|l| l.eta_a).collect()),
        eta_w: mean(layers.iter().filter(|l| l.stage.transforms()).map(|l| l.eta_w).collect()),
        prop_flops: prop,
        trans_flops: trans,
        flops: prop + trans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsify::{random_mask, EdgeMask};
    use crate::synthetic::rng;

    #[test]
    fn prop_flops_formula() {
        let mut chain = MaskChain::new();
        let mut m = EdgeMask::empty(20);
        for p in 0..10 {
            m.set(p, true);
        }
        chain.push(m).unwrap();
        assert_eq!(count_prop_flops(&chain, 4), 80);
        let mut empty = MaskChain::new();
        empty.push(EdgeMask::empty(20)).unwrap();
        assert_eq!(count_prop_flops(&empty, 4), 0);
        assert_eq!(count_prop_flops_with(&chain, 4, 1), 40);
    }

    #[test]
    fn accuracy_one_hot_and_ties() {
        let logits = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&logits, &[0, 1], &[0, 1]).unwrap(), 1.0);
        let uniform = DenseMatrix::zeros(4, 2);
        assert_eq!(accuracy(&uniform, &[0, 1, 0, 1], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(accuracy(&uniform, &[0, 1, 0, 1], &[]).is_err());
        assert!(accuracy(&uniform, &[0, -1, 0, 1], &[1]).is_err());
    }

    #[test]
    fn accuracy_matches_brute_force() {
        let mut r = rng(3);
        let logits = DenseMatrix::random_uniform(50, 5, -1.0, 1.0, &mut r);
        let labels: Vec<i32> = (0..50).map(|i| i * 7 % 5).collect();
        let ids: Vec<usize> = (0..50).step_by(2).collect();
        let mut hits = 0;
        for &i in &ids {
            let row = logits.row(i);
            let best = (0..5).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            hits += usize::from(best == labels[i] as usize);
        }
        assert_eq!(accuracy(&logits, &labels, &ids).unwrap(), hits as f64 / ids.len() as f64);
    }

    #[test]
    fn report_totals_reconcile() {
        let layers = vec![
            LayerReport { stage: Stage::Joint, eta_a: 0.2, eta_w: 0.4, prop_flops: 10, trans_flops: 100 },
            LayerReport { stage: Stage::Joint, eta_a: 0.4, eta_w: 0.6, prop_flops: 6, trans_flops: 50 },
        ];
        let mut report = RunReport::new("toy", serde_json::json!({}), 1, layers);
        assert_eq!(report.totals.flops, 166);
        assert!((report.totals.eta_a - 0.3).abs() < 1e-15);
        report.masks = Some({
            let mut c = MaskChain::new();
            c.push(random_mask(9, 0.3, 1).unwrap()).unwrap();
            c
        });
        report.validate().unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        report.totals.flops += 1;
        assert!(report.validate().is_err());
    }

    #[test]
    fn decoupled_stages_average_separately() {
        let layers = vec![
            LayerReport { stage: Stage::Propagation, eta_a: 0.5, prop_flops: 8, ..Default::default() },
            LayerReport { stage: Stage::Propagation, eta_a: 0.7, prop_flops: 4, ..Default::default() },
            LayerReport { stage: Stage::Transform, eta_w: 0.9, trans_flops: 20, ..Default::default() },
        ];
        let report = RunReport::new("toy", serde_json::json!({}), 0, layers);
        assert!((report.totals.eta_a - 0.6).abs() < 1e-15);
        assert_eq!(report.totals.eta_w, 0.9);
        assert_eq!(report.totals.flops, 32);
    }
}
