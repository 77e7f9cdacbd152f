//! On-disk graph bundles.
//!
//! A bundle is a directory holding `meta.json`, `edges.bin` (little-endian
//! `u32` source/destination pairs, both arcs of every undirected edge, no
//! self-loops), `features.bin` (little-endian `f32`, row-major `n×f`),
//! `labels.bin` (little-endian `i32`, `-1` for unlabeled) and `splits.json`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::synthetic::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n: usize,
    /// Directed arc count. Accepted either as stored in `edges.bin` or
    /// including the `n` self-loops the loader adds.
    pub m: usize,
    pub f: usize,
    pub num_classes: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Random split with `train_per_class` labelled nodes of each class for
    /// training, then `val` and `test` nodes drawn from the remainder.
    pub fn per_class(labels: &[i32], classes: usize, train_per_class: usize, val: usize, test: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..labels.len()).filter(|&u| labels[u] >= 0).collect();
        order.shuffle(&mut rng(seed));
        let mut per = vec![0usize; classes];
        let mut train = Vec::new();
        let mut rest = Vec::new();
        for u in order {
            let c = labels[u] as usize;
            if c < classes && per[c] < train_per_class {
                per[c] += 1;
                train.push(u);
            } else {
                rest.push(u);
            }
        }
        if rest.len() < val + test {
            return Err(Error::InvalidParameter(format!(
                "only {} nodes left for {val} validation and {test} test nodes",
                rest.len()
            )));
        }
        let test_ids = rest.split_off(val);
        let mut s = Splits {
            train,
            val: rest,
            test: test_ids.into_iter().take(test).collect(),
        };
        s.train.sort_unstable();
        s.val.sort_unstable();
        s.test.sort_unstable();
        Ok(s)
    }

    fn check(&self, n: usize, labels: &[i32]) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in ids {
                if id >= n {
                    return Err(format!("{name} id {id} out of range (n = {n})"));
                }
                if labels[id] < 0 {
                    return Err(format!("{name} id {id} is unlabeled"));
                }
                if !seen.insert(id) {
                    return Err(format!("node {id} appears in more than one split slot"));
                }
            }
        }
        Ok(())
    }
}

/// A loaded bundle. `adjacency` is the raw unit-weight graph without self-loops.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub meta: BundleMeta,
    pub adjacency: CsrGraph,
    pub features: DenseMatrix,
    pub labels: Vec<i32>,
    pub splits: Splits,
}

impl Bundle {
    /// Self-looped, normalized propagation matrix `D^{r-1} Ā D^{-r}`.
    pub fn propagation_matrix(&self, r: f64) -> Result<CsrGraph> {
        self.adjacency.add_self_loops().normalize_adjacency(r)
    }

    pub fn from_parts(name: &str, adjacency: CsrGraph, features: DenseMatrix, labels: Vec<i32>, num_classes: usize, splits: Splits) -> Result<Self> {
        let meta = BundleMeta {
            n: adjacency.n(),
            m: adjacency.nnz(),
            f: features.cols(),
            num_classes,
            name: name.to_string(),
        };
        let b = Bundle {
            meta,
            adjacency,
            features,
            labels,
            splits,
        };
        b.check().map_err(|reason| Error::InvalidBundle {
            path: PathBuf::from(name),
            reason,
        })?;
        Ok(b)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let n = self.meta.n;
        if self.adjacency.n() != n || self.features.rows() != n || self.labels.len() != n {
            return Err("node counts disagree".into());
        }
        if self.adjacency.has_self_loops() || (0..n).any(|u| self.adjacency.find(u, u).is_some()) {
            return Err("edges must not contain self-loops".into());
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y < -1 || y >= self.meta.num_classes as i32) {
            return Err(format!("label {bad} outside [-1, {})", self.meta.num_classes));
        }
        self.splits.check(n, &self.labels)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        let mut meta = self.meta.clone();
        meta.m = self.adjacency.nnz();
        put("meta.json", &serde_json::to_vec_pretty(&meta).expect("meta serializes"))?;
        let mut edges = Vec::with_capacity(8 * self.adjacency.nnz());
        for u in 0..self.adjacency.n() {
            for pos in self.adjacency.row_range(u) {
                edges.extend_from_slice(&(u as u32).to_le_bytes());
                edges.extend_from_slice(&(self.adjacency.col_idx()[pos] as u32).to_le_bytes());
            }
        }
        put("edges.bin", &edges)?;
        put("features.bin", &encode_features(&self.features))?;
        let labels: Vec<u8> = self.labels.iter().flat_map(|y| y.to_le_bytes()).collect();
        put("labels.bin", &labels)?;
        put("splits.json", &serde_json::to_vec(&self.splits).expect("splits serialize"))
    }
}

/// Row-major little-endian `f32` payload in the `features.bin` layout.
pub fn encode_features(x: &DenseMatrix) -> Vec<u8> {
    x.data().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn decode_features(bytes: &[u8], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if bytes.len() != 4 * rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "feature payload has {} bytes, expected {}",
            bytes.len(),
            4 * rows * cols
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let invalid = |reason: String| Error::InvalidBundle {
        path: dir.to_path_buf(),
        reason,
    };
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| Error::io(&p, e))
    };
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_slice(&read("meta.json")?).map_err(|e| Error::json(&meta_path, e))?;
    let n = meta.n;

    let edges = read("edges.bin")?;
    if edges.len() % 8 != 0 {
        return Err(invalid(format!("edges.bin length {} is not a multiple of 8", edges.len())));
    }
    let arcs_stored = edges.len() / 8;
    if meta.m != arcs_stored && meta.m != arcs_stored + n {
        return Err(invalid(format!(
            "meta.m = {} but edges.bin holds {arcs_stored} arcs",
            meta.m
        )));
    }
    let mut arcs = Vec::with_capacity(arcs_stored);
    for c in edges.chunks_exact(8) {
        let u = u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize;
        let v = u32::from_le_bytes([c[4], c[5], c[6], c[7]]) as usize;
        if u == v {
            return Err(invalid(format!("self-loop ({u},{u}) in edges.bin")));
        }
        arcs.push((u, v));
    }
    let adjacency = CsrGraph::from_arcs(n, &arcs).map_err(|e| invalid(e.to_string()))?;

    let features = decode_features(&read("features.bin")?, n, meta.f).map_err(|e| invalid(format!("features.bin: {e}")))?;

    let label_bytes = read("labels.bin")?;
    if label_bytes.len() != 4 * n {
        return Err(invalid(format!("labels.bin has {} bytes, expected {}", label_bytes.len(), 4 * n)));
    }
    let labels: Vec<i32> = label_bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let splits_path = dir.join("splits.json");
    let splits: Splits = serde_json::from_slice(&read("splits.json")?).map_err(|e| Error::json(&splits_path, e))?;

    let bundle = Bundle {
        meta,
        adjacency,
        features,
        labels,
        splits,
    };
    bundle.check().map_err(invalid)?;
    Ok(bundle)
}
