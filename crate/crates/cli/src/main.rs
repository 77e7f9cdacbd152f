use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use unifews::bundle::{encode_features, load_bundle};
use unifews::gnn::TrainConfig;
use unifews::pipeline::{run_decoupled, run_iterative, sweep, sweep_csv, thread_pool_from_env, DecoupledConfig, SweepConfig};
use unifews::propagate::PropagationScheme;
use unifews::theory::{
    approx_smoothing_suite, mean_curves, multi_hop_error_curve, smoothing_distance, sparsifier_bound_suite,
    suite_instance, CurveRow, SuiteRow,
};
use unifews::{DenseMatrix, SchemeKind, ThresholdPolicy};

#[derive(Parser)]
#[command(name = "unifews", version, about = "Entry-wise sparsified GNN propagation and training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Sgc,
    Appnp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Thm42,
    Thm43,
    Prop44,
    Smoothing,
}

#[derive(Subcommand)]
enum Command {
    /// Sparsified propagation followed by a weight-pruned MLP.
    RunDecoupled {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value = "sgc")]
        scheme: Scheme,
        #[arg(long, default_value_t = 2)]
        hops: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        delta_a: f64,
        #[arg(long, default_value_t = 0.0)]
        delta_w: f64,
        #[arg(long, overrides_with = "no_skip")]
        skip: bool,
        #[arg(long = "no-skip", overrides_with = "skip")]
        no_skip: bool,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 512)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the propagated embedding in the features.bin layout.
        #[arg(long)]
        embedding_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Iterative GCN with joint edge and weight sparsification.
    RunIterative {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 512)]
        hidden: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.0)]
        delta_a: f64,
        #[arg(long, default_value_t = 0.0)]
        delta_w: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 5e-4)]
        weight_decay: f64,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every point of a threshold grid and writes one CSV row per point.
    Sweep {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerical checks of the approximation guarantees on random graphs.
    Theory {
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05, 0.1])]
        delta_a: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 20)]
        hops: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loads a bundle and reports whether it is well-formed.
    ValidateBundle {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match thread_pool_from_env() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<unifews::Error>().map_or(1, |u| u.exit_code());
            ExitCode::from(code as u8)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::RunDecoupled {
            bundle,
            scheme,
            hops,
            alpha,
            delta_a,
            delta_w,
            skip: _,
            no_skip,
            r,
            epochs,
            hidden,
            depth,
            seed,
            embedding_out,
            out,
        } => {
            let b = load_bundle(&bundle)?;
            let prop = DecoupledConfig {
                scheme: match scheme {
                    Scheme::Sgc => SchemeKind::Sgc,
                    Scheme::Appnp => SchemeKind::Appnp,
                },
                hops,
                alpha,
                r,
            };
            let cfg = TrainConfig {
                epochs,
                hidden_width: hidden,
                layer_depth: depth,
                seed,
                ..TrainConfig::default()
            };
            let policy = ThresholdPolicy::new(delta_a, delta_w)?.with_skip(!no_skip);
            let (report, trace) = run_decoupled(&b, &prop, &cfg, &policy)?;
            write_json(&out, &report)?;
            if let Some(path) = embedding_out {
                std::fs::write(&path, encode_features(&trace.embedding))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            summarize(&report);
        }
        Command::RunIterative {
            bundle,
            depth,
            hidden,
            epochs,
            delta_a,
            delta_w,
            seed,
            lr,
            weight_decay,
            r,
            out,
        } => {
            let b = load_bundle(&bundle)?;
            let cfg = TrainConfig {
                epochs,
                hidden_width: hidden,
                layer_depth: depth,
                seed,
                learning_rate: lr,
                weight_decay,
                ..TrainConfig::default()
            };
            let policy = ThresholdPolicy::new(delta_a, delta_w)?;
            let report = run_iterative(&b, &cfg, &policy, r)?;
            write_json(&out, &report)?;
            summarize(&report);
        }
        Command::Sweep { bundle, grid, out } => {
            let b = load_bundle(&bundle)?;
            let text = std::fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let cfg: SweepConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", grid.display()))?;
            let results = sweep(&b, &cfg)?;
            write_text(&out, &sweep_csv(&results)?)?;
            println!("{} grid points written to {}", results.len(), out.display());
        }
        Command::Theory {
            check,
            n,
            seeds,
            delta_a,
            c,
            hops,
            out,
        } => return theory(check, n, seeds, &delta_a, c, hops, &out),
        Command::ValidateBundle { bundle } => {
            let b = load_bundle(&bundle)?;
            println!(
                "ok: {} n={} arcs={} f={} classes={} train/val/test={}/{}/{}",
                b.meta.name,
                b.meta.n,
                b.adjacency.nnz(),
                b.meta.f,
                b.meta.num_classes,
                b.splits.train.len(),
                b.splits.val.len(),
                b.splits.test.len()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(report: &unifews::RunReport) {
    let t = &report.totals;
    println!(
        "eta_a={:.4} eta_w={:.4} flops={} acc train/val/test={:.4}/{:.4}/{:.4}",
        t.eta_a, t.eta_w, t.flops, report.accuracy.train, report.accuracy.val, report.accuracy.test
    );
}

fn csv_of<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn theory(check: Check, n: usize, seeds: u64, grid: &[f64], c: f64, hops: usize, out: &Path) -> anyhow::Result<ExitCode> {
    if n == 0 || seeds == 0 {
        bail!("--n and --seeds must be positive");
    }
    let suite = |rows: Vec<SuiteRow>| -> anyhow::Result<ExitCode> {
        write_text(out, &csv_of(&rows)?)?;
        let failed = rows.iter().filter(|r| !r.holds).count();
        println!("{} instances, {failed} violations", rows.len());
        Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
    };
    match check {
        Check::Thm43 => suite(sparsifier_bound_suite(&[n], seeds, grid)?),
        Check::Thm42 => suite(approx_smoothing_suite(&[n], seeds, grid, &[c])?),
        Check::Prop44 | Check::Smoothing => {
            let mut full_grid = vec![0.0];
            full_grid.extend(grid.iter().copied().filter(|d| *d != 0.0));
            let mut tables: Vec<Vec<CurveRow>> = Vec::new();
            for seed in 0..seeds {
                let (t, p) = suite_instance(n, seed);
                let x = DenseMatrix::column(&p)?;
                let base = ThresholdPolicy::default();
                tables.push(match check {
                    Check::Prop44 => multi_hop_error_curve(&t, &x, &PropagationScheme::sgc(hops), &base, &full_grid)?,
                    _ => {
                        // λmax(L) ≤ 2 under the symmetric normalization
                        let scheme = PropagationScheme::smoothing(hops, 1.0 / (1.0 + 2.0 * c), c);
                        smoothing_distance(&t, &x, &scheme, &base, &full_grid, c)?
                    }
                });
            }
            let rows = mean_curves(&tables);
            write_text(out, &csv_of(&rows)?)?;
            println!("{} rows averaged over {seeds} instances", rows.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}
