use unifews::gnn::{forward_sparsified, masks_of, mlp_forward, train, GcnModel, Objective, TrainConfig};
use unifews::synthetic::{erdos_renyi, rng};
use unifews::{masked_spmm, sparsify_edges_nodewise, CsrGraph, DenseMatrix, EdgeMask, Splits, ThresholdPolicy};

fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Unpruned GCN written directly from the layer recurrence.
fn dense_gcn(t: &CsrGraph, x: &DenseMatrix, model: &GcnModel) -> Vec<Vec<f64>> {
    let td: Vec<Vec<f64>> = (0..t.n()).map(|u| (0..t.n()).map(|v| t.get(u, v)).collect()).collect();
    let mut h = rows_of(x);
    for (i, layer) in model.layers.iter().enumerate() {
        let z = naive_matmul(&naive_matmul(&td, &h), &rows_of(&layer.weight));
        h = if i + 1 < model.depth() {
            z.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
        } else {
            z
        };
    }
    h
}

fn max_rel(a: &DenseMatrix, b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut worst = 0.0f64;
    for (r, row) in b.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((a.get(r, c) - v).abs() / scale);
        }
    }
    worst
}

fn instance(n: usize, f: usize, seed: u64) -> (CsrGraph, DenseMatrix) {
    let t = erdos_renyi(n, 0.15, seed).add_self_loops().normalize_adjacency(0.5).unwrap();
    let x = DenseMatrix::random_uniform(n, f, -1.0, 1.0, &mut rng(seed + 1000));
    (t, x)
}

#[test]
fn unpruned_forward_matches_dense_gcn() {
    for (seed, n) in [(1u64, 8usize), (2, 23), (3, 40), (4, 64)] {
        let (t, x) = instance(n, 6, seed);
        let model = GcnModel::glorot(&[6, 9, 4], false, seed).unwrap();
        let policy = ThresholdPolicy::new(0.0, 0.0).unwrap().with_skip(false);
        let trace = forward_sparsified(&model, &t, &x, &policy).unwrap();
        let err = max_rel(&trace.logits, &dense_gcn(&t, &x, &model));
        assert!(err < 1e-6, "n={n}: relative error {err}");
    }
}

#[test]
fn infinite_weight_threshold_zeroes_logits() {
    let (t, x) = instance(20, 5, 7);
    let model = GcnModel::glorot(&[5, 8, 3], false, 7).unwrap();
    let policy = ThresholdPolicy::new(0.0, f64::INFINITY).unwrap();
    let trace = forward_sparsified(&model, &t, &x, &policy).unwrap();
    assert!(trace.logits.data().iter().all(|v| *v == 0.0));
    assert_eq!(trace.trans_flops(), 0);
    assert!(trace.layers.iter().all(|l| l.eta_w == 1.0));
}

#[test]
fn identity_layer_returns_masked_propagation() {
    let (t, x) = instance(30, 4, 9);
    let model = GcnModel::from_weights(vec![DenseMatrix::identity(4)]).unwrap();
    let policy = ThresholdPolicy::new(0.05, 0.0).unwrap();
    let trace = forward_sparsified(&model, &t, &x, &policy).unwrap();
    let (mask, _) = sparsify_edges_nodewise(&t, &x, 0.05, &EdgeMask::full(t.nnz()), false).unwrap();
    let expect = masked_spmm(&t, &mask, &x, true).unwrap();
    assert_eq!(trace.logits, expect);
    assert_eq!(trace.edge_masks.layers()[0], mask);
}

#[test]
fn mlp_matches_dense_oracle_and_trivial_cases() {
    let h0 = DenseMatrix::random_uniform(12, 5, -1.0, 1.0, &mut rng(3));
    let model = GcnModel::glorot(&[5, 7, 3], false, 3).unwrap();
    let trace = mlp_forward(&model, &h0, 0.0).unwrap();
    let mut h = rows_of(&h0);
    for (i, l) in model.layers.iter().enumerate() {
        h = naive_matmul(&h, &rows_of(&l.weight));
        if i == 0 {
            h.iter_mut().flatten().for_each(|v| *v = v.max(0.0));
        }
    }
    assert!(max_rel(&trace.logits, &h) < 1e-12);
    assert!(trace.edge_masks.is_empty());
    assert_eq!(trace.prop_flops(), 0);

    let zero = mlp_forward(&model, &DenseMatrix::zeros(12, 5), 0.0).unwrap();
    assert!(zero.logits.data().iter().all(|v| *v == 0.0));

    // one-hot columns select input columns 4, 0, 2
    let mut w = DenseMatrix::zeros(5, 3);
    for (out, src) in [(0, 4), (1, 0), (2, 2)] {
        w.set(src, out, 1.0);
    }
    let gather = mlp_forward(&GcnModel::from_weights(vec![w]).unwrap(), &h0, 0.0).unwrap();
    for r in 0..12 {
        assert_eq!(gather.logits.row(r), &[h0.get(r, 4), h0.get(r, 0), h0.get(r, 2)]);
    }
}

#[test]
fn flop_counters_reconcile_with_popcounts() {
    let (t, x) = instance(50, 6, 11);
    let model = GcnModel::glorot(&[6, 10, 3], false, 11).unwrap();
    let policy = ThresholdPolicy::new(0.05, 0.1).unwrap();
    let trace = forward_sparsified(&model, &t, &x, &policy).unwrap();
    let n = t.n() as u64;
    for (l, (lt, layer)) in trace.layers.iter().zip(&model.layers).enumerate() {
        assert_eq!(lt.trans_flops, 2 * n * lt.kept_weights as u64, "layer {l}");
        let kept = trace.edge_masks.layers()[l].kept() as u64;
        let f = layer.in_dim as u64;
        assert_eq!(lt.prop_flops, 2 * kept * f + n * f, "layer {l}");
        let total = (layer.in_dim * layer.out_dim) as f64;
        assert!((lt.eta_w - (1.0 - lt.kept_weights as f64 / total)).abs() < 1e-15);
    }
    assert!(trace.edge_masks.is_monotone());
}

fn deviation(model: &GcnModel, t: &CsrGraph, x: &DenseMatrix, da: f64, dw: f64) -> f64 {
    let reference = forward_sparsified(model, t, x, &ThresholdPolicy::new(0.0, 0.0).unwrap()).unwrap();
    let pruned = forward_sparsified(model, t, x, &ThresholdPolicy::new(da, dw).unwrap()).unwrap();
    pruned.logits.sub(&reference.logits).unwrap().frobenius_norm()
}

#[test]
fn output_deviation_grows_with_each_threshold() {
    let grid = [0.0, 0.02, 0.05, 0.1, 0.2];
    for seed in [21u64, 22, 23] {
        let (t, x) = instance(48, 8, seed);
        let model = GcnModel::glorot(&[8, 8], false, seed).unwrap();
        let by_w: Vec<f64> = grid.iter().map(|&dw| deviation(&model, &t, &x, 0.05, dw)).collect();
        let by_a: Vec<f64> = grid.iter().map(|&da| deviation(&model, &t, &x, da, 0.05)).collect();
        for w in by_w.windows(2).chain(by_a.windows(2)) {
            assert!(w[1] >= w[0], "seed {seed}: {by_w:?} / {by_a:?}");
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let (t, x) = instance(6, 3, 5);
    let t = if t.nnz() > 6 { t } else { unifews::synthetic::clique(6).add_self_loops().normalize_adjacency(0.5).unwrap() };
    for (da, dw, bias) in [(0.0, 0.0, false), (0.05, 0.1, false), (0.02, 0.05, true)] {
        let mut model = GcnModel::glorot(&[3, 5, 2], bias, 17).unwrap();
        if let Some(b) = model.layers[0].bias.as_mut() {
            b.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64 - 0.2);
        }
        let labels = [0, 1, 0, 1, 1, 0];
        let train_ids = [0, 1, 2, 3, 4, 5];
        let objective = Objective {
            graph: Some(&t),
            features: &x,
            labels: &labels,
            train_ids: &train_ids,
            policy: ThresholdPolicy::new(da, dw).unwrap(),
            weight_decay: 0.01,
            flops_per_mac: 2,
        };
        let eval = objective.evaluate(&model, &Default::default()).unwrap();
        let frozen = masks_of(&eval.trace);
        let eps = 1e-4;
        let mut checked = 0;
        for li in 0..model.depth() {
            let (rows, cols) = model.layers[li].weight.shape();
            for j in 0..rows {
                for i in 0..cols {
                    if !eval.trace.weight_masks[li].is_kept(j, i) {
                        assert_eq!(eval.grads.weights[li].get(j, i), 0.0);
                        continue;
                    }
                    let w0 = model.layers[li].weight.get(j, i);
                    model.layers[li].weight.set(j, i, w0 + eps);
                    let up = objective.loss(&model, &frozen).unwrap();
                    model.layers[li].weight.set(j, i, w0 - eps);
                    let down = objective.loss(&model, &frozen).unwrap();
                    model.layers[li].weight.set(j, i, w0);
                    let fd = (up - down) / (2.0 * eps);
                    let g = eval.grads.weights[li].get(j, i);
                    let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                    assert!(rel < 1e-4, "layer {li} ({j},{i}) δ=({da},{dw}): grad {g} vs fd {fd}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }
}

fn two_cliques() -> (CsrGraph, DenseMatrix, Vec<i32>) {
    let mut arcs = Vec::new();
    for block in [0usize, 4] {
        for u in block..block + 4 {
            for v in block..block + 4 {
                if u != v {
                    arcs.push((u, v));
                }
            }
        }
    }
    arcs.extend([(3, 4), (4, 3)]);
    let t = CsrGraph::from_arcs(8, &arcs).unwrap().add_self_loops().normalize_adjacency(0.5).unwrap();
    let rows: Vec<Vec<f64>> = (0..8).map(|u| if u < 4 { vec![1.0, 0.2] } else { vec![0.2, 1.0] }).collect();
    let labels = (0..8).map(|u| i32::from(u >= 4)).collect();
    (t, DenseMatrix::from_rows(&rows).unwrap(), labels)
}

#[test]
fn separable_toy_reaches_full_train_accuracy() {
    let (t, x, labels) = two_cliques();
    let splits = Splits {
        train: vec![1, 2, 3, 4, 5, 6],
        val: vec![0, 7],
        test: vec![],
    };
    let cfg = TrainConfig {
        hidden_width: 8,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let model = GcnModel::glorot(&GcnModel::dims_for(2, 8, 2, 2), false, 1).unwrap();
    let policy = ThresholdPolicy::new(0.0, 0.0).unwrap();
    let (_, report) = train(&model, Some(&t), &x, &labels, &splits, &cfg, &policy).unwrap();
    assert_eq!(report.accuracy.train, 1.0);
    assert_eq!(report.epochs.len(), 200);
    report.validate().unwrap();
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let (t, x, labels) = two_cliques();
    let splits = Splits {
        train: vec![0, 5],
        val: vec![1, 6],
        test: vec![],
    };
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 5,
        ..TrainConfig::default()
    };
    let model = GcnModel::glorot(&[2, 4, 2], true, 2).unwrap();
    let (trained, _) = train(&model, Some(&t), &x, &labels, &splits, &cfg, &ThresholdPolicy::new(0.01, 0.01).unwrap()).unwrap();
    assert_eq!(trained, model);
}

#[test]
fn training_is_deterministic() {
    let (t, x, labels) = two_cliques();
    let splits = Splits {
        train: vec![0, 1, 5, 6],
        val: vec![2, 7],
        test: vec![3, 4],
    };
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let model = GcnModel::glorot(&[2, 6, 2], false, 3).unwrap();
    let policy = ThresholdPolicy::new(0.02, 0.05).unwrap();
    let a = train(&model, Some(&t), &x, &labels, &splits, &cfg, &policy).unwrap();
    let b = train(&model, Some(&t), &x, &labels, &splits, &cfg, &policy).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.epochs, b.1.epochs);
    assert_eq!(a.1.accuracy, b.1.accuracy);
}

#[test]
fn pruned_weights_stay_pruned_under_freezing() {
    use unifews::gnn::{EdgeMaskMode, WeightPruneSchedule};
    let (t, x, labels) = two_cliques();
    let splits = Splits {
        train: vec![0, 1, 5, 6],
        val: vec![2, 7],
        test: vec![3, 4],
    };
    let cfg = TrainConfig {
        epochs: 20,
        weight_prune: WeightPruneSchedule {
            start_epoch: 0,
            freeze_epoch: Some(0),
        },
        edge_masks: EdgeMaskMode::FreezeAfterFirst,
        ..TrainConfig::default()
    };
    let model = GcnModel::glorot(&[2, 16, 2], false, 4).unwrap();
    let policy = ThresholdPolicy::new(0.05, 0.3).unwrap();
    let (_, report) = train(&model, Some(&t), &x, &labels, &splits, &cfg, &policy).unwrap();
    let first = &report.epochs[0];
    assert!(first.eta_w.iter().any(|e| *e > 0.0));
    for e in &report.epochs[1..] {
        assert_eq!(e.eta_w, first.eta_w);
        assert_eq!(e.eta_a, first.eta_a);
        assert_eq!(e.flops, first.flops);
    }
}
