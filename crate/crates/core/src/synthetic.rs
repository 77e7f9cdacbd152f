//! Seeded graph generators for fixtures and property suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::graph::CsrGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Undirected Erdős–Rényi graph stored with both arcs, no self-loops.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> CsrGraph {
    let mut rng = rng(seed);
    let mut arcs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                arcs.push((u, v));
                arcs.push((v, u));
            }
        }
    }
    CsrGraph::from_arcs(n, &arcs).expect("generated arcs are unique")
}

pub fn path(n: usize) -> CsrGraph {
    let arcs: Vec<_> = (1..n).flat_map(|v| [(v - 1, v), (v, v - 1)]).collect();
    CsrGraph::from_arcs(n, &arcs).expect("path is valid")
}

pub fn clique(n: usize) -> CsrGraph {
    let arcs: Vec<_> = (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect();
    CsrGraph::from_arcs(n, &arcs).expect("clique is valid")
}

/// A labelled node-classification instance.
#[derive(Debug, Clone)]
pub struct LabelledGraph {
    pub graph: CsrGraph,
    pub features: DenseMatrix,
    pub labels: Vec<i32>,
    pub num_classes: usize,
}

/// Planted-partition graph with class-correlated sparse binary features.
///
/// Nodes are assigned round-robin to `classes` blocks; edges appear with
/// probability `p_in` inside a block and `p_out` across blocks. Each class owns
/// a band of `f / classes` feature columns that its nodes switch on with
/// probability `signal`, on top of background noise `noise`.
#[allow(clippy::too_many_arguments)]
pub fn planted_partition(
    n: usize,
    classes: usize,
    p_in: f64,
    p_out: f64,
    f: usize,
    signal: f64,
    noise: f64,
    seed: u64,
) -> LabelledGraph {
    assert!(classes > 0 && f >= classes);
    let mut rng = rng(seed);
    let labels: Vec<i32> = (0..n).map(|u| (u % classes) as i32).collect();
    let mut arcs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                arcs.push((u, v));
                arcs.push((v, u));
            }
        }
    }
    let graph = CsrGraph::from_arcs(n, &arcs).expect("generated arcs are unique");
    let band = f / classes;
    let mut features = DenseMatrix::zeros(n, f);
    for u in 0..n {
        let c = labels[u] as usize;
        for j in 0..f {
            let own = j / band == c;
            let p = if own { signal } else { noise };
            if rng.gen::<f64>() < p {
                features.set(u, j, 1.0);
            }
        }
    }
    LabelledGraph {
        graph,
        features,
        labels,
        num_classes: classes,
    }
}
