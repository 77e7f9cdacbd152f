use unifews::gnn::TrainConfig;
use unifews::pipeline::{run_decoupled, run_iterative, sweep, sweep_csv, DecoupledConfig, ModelKind, SweepConfig};
use unifews::synthetic::planted_partition;
use unifews::{count_prop_flops, Bundle, SchemeKind, Splits, ThresholdPolicy};

fn bundle() -> Bundle {
    let lg = planted_partition(120, 3, 0.12, 0.01, 24, 0.4, 0.03, 5);
    let splits = Splits::per_class(&lg.labels, 3, 10, 30, 50, 5).unwrap();
    Bundle::from_parts("planted", lg.graph, lg.features, lg.labels, 3, splits).unwrap()
}

fn small_train() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        hidden_width: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn single_point_sweep_equals_direct_run() {
    let b = bundle();
    let cfg = SweepConfig {
        train: small_train(),
        ..SweepConfig::default()
    };
    let results = sweep(&b, &cfg).unwrap();
    assert_eq!(results.len(), 1);
    let direct = run_iterative(&b, &cfg.train, &ThresholdPolicy::new(0.0, 0.0).unwrap(), 0.5).unwrap();
    let (_, swept) = &results[0];
    assert_eq!(swept.layers, direct.layers);
    assert_eq!(swept.accuracy, direct.accuracy);
    assert_eq!(swept.epochs, direct.epochs);
}

#[test]
fn graph_sparsity_rises_with_threshold_and_csv_is_reproducible() {
    let b = bundle();
    let cfg = SweepConfig {
        model: ModelKind::Decoupled,
        delta_a: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.3],
        delta_w: vec![0.0],
        train: small_train(),
        decoupled: DecoupledConfig {
            scheme: SchemeKind::Appnp,
            hops: 6,
            alpha: 0.2,
            r: 0.5,
        },
        ..SweepConfig::default()
    };
    let first = sweep(&b, &cfg).unwrap();
    let etas: Vec<f64> = first.iter().map(|(_, r)| r.totals.eta_a).collect();
    assert!(etas.windows(2).all(|w| w[1] >= w[0]), "{etas:?}");
    // at δ = 0 only messages from all-zero rows are dropped
    assert!(*etas.last().unwrap() > etas[0], "{etas:?}");

    let csv_a = sweep_csv(&first).unwrap();
    let csv_b = sweep_csv(&sweep(&b, &cfg).unwrap()).unwrap();
    assert_eq!(csv_a, csv_b);
    assert!(csv_a.starts_with("delta_a,delta_w,eta_a,eta_w,"));
    assert_eq!(csv_a.lines().count(), 1 + 6);
}

#[test]
fn decoupled_flops_reconcile_with_masks() {
    let b = bundle();
    let prop = DecoupledConfig {
        hops: 4,
        ..DecoupledConfig::default()
    };
    let policy = ThresholdPolicy::new(0.02, 0.05).unwrap().with_skip(false);
    let (report, trace) = run_decoupled(&b, &prop, &small_train(), &policy).unwrap();
    report.validate().unwrap();
    assert_eq!(report.totals.prop_flops, count_prop_flops(&trace.masks, b.meta.f));
    assert_eq!(report.masks.as_ref().unwrap(), &trace.masks);
    let hops = report.config["hops"].as_array().unwrap();
    assert_eq!(hops.len(), 4);
}

#[test]
fn sweep_config_reads_partial_json() {
    let cfg: SweepConfig = serde_json::from_str(r#"{"delta_a":[0.0,0.1],"delta_w":[0.0,0.2,0.4],"train":{"epochs":3}}"#).unwrap();
    assert_eq!(cfg.points().unwrap().len(), 6);
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(cfg.train.hidden_width, 512);
    let bad: SweepConfig = serde_json::from_str(r#"{"delta_a":[-1.0]}"#).unwrap();
    assert!(bad.points().is_err());
}

#[test]
fn quantile_prunes_the_requested_fraction() {
    use unifews::pipeline::prune_quantile;
    let mut scores: Vec<f64> = (1..=10).map(f64::from).collect();
    let d = prune_quantile(&mut scores, 0.3);
    assert_eq!(d, 3.0);
    assert_eq!(scores.iter().filter(|s| **s <= d).count(), 3);
    assert_eq!(prune_quantile(&mut scores, 0.0), 0.0);
    assert_eq!(prune_quantile(&mut scores, 1.0), 10.0);
}

#[test]
fn calibration_lands_near_targets_at_initialization() {
    use unifews::gnn::{forward_sparsified, GcnModel};
    use unifews::pipeline::calibrate_thresholds;
    let b = bundle();
    let cfg = small_train();
    let policy = calibrate_thresholds(&b, &cfg, 0.5, 0.5, 0.5).unwrap();
    let model = GcnModel::glorot(&GcnModel::dims_for(b.meta.f, 16, 3, 2), false, cfg.seed).unwrap();
    let trace = forward_sparsified(&model, &b.propagation_matrix(0.5).unwrap(), &b.features, &policy).unwrap();
    let first = trace.layers[0];
    assert!((first.eta_a - 0.5).abs() < 0.1, "{first:?}");
    assert!((trace.mean_eta_w() - 0.5).abs() < 0.15, "{:?}", trace.layers);
}
