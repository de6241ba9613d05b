//! `vouch` — train multi-view weighted majority votes by minimizing
//! PAC-Bayesian bounds, and certify the result next to the empirical risk.
//!
//! Subcommands: `train` (one run file), `sweep` (a grid of run files plus a
//! summary series), `report` (CSV + plot JSON from run files), `verify`
//! (randomized self-audit against independent oracles), `synth` and
//! `poison` (dataset tooling).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use vouch_cli::audit::{run_audit, AuditConfig};
use vouch_cli::data::{
    load_dataset, make_binary_task, poison_views, save_dataset, synth_dataset, MultiViewDataset,
};
use vouch_cli::report::{build_report, canonical_json, read_run_file, write_json, RunFile};
use vouch_cli::run::{run_training, Mode, TrainConfig};
use vouch_core::{AlphaMode, BoundKind, OptimizerKind};

#[derive(Parser, Debug)]
#[command(
    name = "vouch",
    version,
    about = "PAC-Bayesian certificates for multi-view weighted majority votes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train posteriors for each requested bound and write a run file.
    Train(TrainArgs),
    /// Tabulate run files into a wide CSV and a plot-series JSON.
    Report(ReportArgs),
    /// Re-run training over a grid (labeled fraction or Rényi order).
    Sweep(SweepArgs),
    /// Audit the numerics against independent oracles on random instances.
    Verify(VerifyArgs),
    /// Generate a synthetic multi-view dataset directory.
    Synth(SynthArgs),
    /// Corrupt chosen views of a dataset with scaled Gaussian noise.
    Poison(PoisonArgs),
}

/// Where the training data comes from: a directory on disk or a synthetic
/// generator spec, optionally reduced to a one-vs-one binary task.
#[derive(Args, Debug)]
struct SourceArgs {
    /// Dataset directory (meta.json, view_k.csv, labels.csv).
    #[arg(long, value_name = "DIR", conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic spec `V,m,C,d,n1..nV` (e.g. `3,300,2,1,1.4,1.6,2.0`).
    #[arg(long, value_name = "SPEC")]
    synth: Option<String>,
    /// Keep only labels `a,b` and relabel them 0,1.
    #[arg(long, value_name = "A,B")]
    binary_task: Option<String>,
}

impl SourceArgs {
    /// Loads or synthesizes the dataset. Synthetic data draws from `seed`,
    /// so the same base seed reproduces the same pool.
    fn load(&self, seed: u64) -> Result<MultiViewDataset> {
        let ds = match (&self.data, &self.synth) {
            (Some(dir), None) => load_dataset(dir)?,
            (None, Some(spec)) => {
                let (v, m, c, d, noise) = parse_synth_spec(spec)?;
                synth_dataset(v, m, c, d, &noise, seed)?
            }
            _ => bail!("pass exactly one of --data DIR or --synth SPEC"),
        };
        match &self.binary_task {
            Some(pair) => {
                let (a, b) = parse_label_pair(pair)?;
                Ok(make_binary_task(&ds, a, b)?)
            }
            None => Ok(ds),
        }
    }
}

/// Voter strength presets (tree depth).
#[derive(ValueEnum, Clone, Copy, Debug)]
enum Depth {
    #[value(name = "stump")]
    Stump,
    #[value(name = "weak")]
    Weak,
    #[value(name = "strong")]
    Strong,
    #[value(name = "strong20")]
    Strong20,
}

impl Depth {
    fn levels(self) -> usize {
        match self {
            Depth::Stump => 1,
            Depth::Weak => 3,
            Depth::Strong => 6,
            Depth::Strong20 => 20,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OptChoice {
    #[value(name = "adamw")]
    Adamw,
    #[value(name = "cocob")]
    Cocob,
}

impl OptChoice {
    fn to_kind(self) -> OptimizerKind {
        match self {
            OptChoice::Adamw => OptimizerKind::AdamW,
            OptChoice::Cocob => OptimizerKind::CoinBetting,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated bound kinds (default: every kind legal for the
    /// dataset's class count).
    #[arg(long, value_delimiter = ',', value_name = "KINDS")]
    bounds: Option<Vec<String>>,
    /// Divergence: `kl`, `fixed:X` with X > 1, or `learnable`.
    /// Defaults to `fixed:1.1` for multi-view runs and `kl` otherwise.
    #[arg(long)]
    alpha: Option<String>,
    /// Fraction of the non-test rows that keep their labels.
    #[arg(long, default_value_t = 1.0, value_name = "F")]
    labeled_frac: f64,
    /// Fraction of rows held out for the test estimate.
    #[arg(long, default_value_t = 0.2, value_name = "F")]
    test_frac: f64,
    #[arg(long, value_enum, default_value_t = Depth::Stump)]
    depth: Depth,
    /// Trees per view.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Number of runs; run r uses seed `seed + r` for split and forests.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Base seed (also seeds --synth).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Certificate failure probability.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Optimizer iteration budget.
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Certify view K alone (1-based) instead of the multi-view vote.
    #[arg(long, value_name = "K", conflicts_with = "concat")]
    single_view: Option<usize>,
    /// Certify all views' features concatenated into one view.
    #[arg(long)]
    concat: bool,
    /// Force an optimizer (default: per-kind choice).
    #[arg(long, value_enum)]
    optimizer: Option<OptChoice>,
    /// Output run file (canonical JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run files produced by `train` or `sweep`.
    #[arg(required = true, value_name = "RUN_FILE")]
    files: Vec<PathBuf>,
    /// Output CSV table.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Output plot-series JSON (default: the CSV path with .plot.json).
    #[arg(long, value_name = "FILE")]
    plot: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Axis {
    #[value(name = "labeled-frac")]
    LabeledFrac,
    #[value(name = "alpha")]
    Alpha,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::LabeledFrac => "labeled-frac",
            Axis::Alpha => "alpha",
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Grid axis: the labeled fraction (fixed grid 0.05..1) or the Rényi
    /// order (user grid via --alphas).
    #[arg(long, value_enum)]
    axis: Axis,
    /// Rényi orders for `--axis alpha`, each > 1 (comma separated).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    alphas: Option<Vec<f64>>,
    /// Comma-separated bound kinds (default: every legal kind).
    #[arg(long, value_delimiter = ',', value_name = "KINDS")]
    bounds: Option<Vec<String>>,
    /// Divergence on the labeled-fraction axis (same syntax as train).
    #[arg(long)]
    alpha: Option<String>,
    /// Labeled fraction on the alpha axis.
    #[arg(long, default_value_t = 1.0, value_name = "F")]
    labeled_frac: f64,
    #[arg(long, default_value_t = 0.2, value_name = "F")]
    test_frac: f64,
    #[arg(long, value_enum, default_value_t = Depth::Stump)]
    depth: Depth,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, value_enum)]
    optimizer: Option<OptChoice>,
    /// Output directory for per-cell run files and summary.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Random instances per statistical check.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Random points per (bound, divergence-mode) gradient check.
    #[arg(long, default_value_t = 3)]
    grad_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// `V,m,C,d,n1..nV`.
    #[arg(long, value_name = "SPEC")]
    spec: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PoisonArgs {
    /// Dataset directory to read.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// 1-based view indices to corrupt (comma separated).
    #[arg(long, value_delimiter = ',', value_name = "LIST", required = true)]
    views: Vec<usize>,
    /// Noise scale in units of each column's standard deviation.
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn parse_synth_spec(spec: &str) -> Result<(usize, usize, usize, usize, Vec<f64>)> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() < 5 {
        bail!("--synth expects `V,m,C,d,n1..nV`, got {spec:?}");
    }
    let head: Vec<usize> = parts[..4]
        .iter()
        .map(|s| s.parse().map_err(|_| anyhow!("--synth: {s:?} is not a count")))
        .collect::<Result<_>>()?;
    let (v, m, c, d) = (head[0], head[1], head[2], head[3]);
    if parts.len() != 4 + v {
        bail!("--synth names {v} views but lists {} noise scales", parts.len() - 4);
    }
    let noise: Vec<f64> = parts[4..]
        .iter()
        .map(|s| s.parse().map_err(|_| anyhow!("--synth: {s:?} is not a noise scale")))
        .collect::<Result<_>>()?;
    Ok((v, m, c, d, noise))
}

fn parse_label_pair(pair: &str) -> Result<(u16, u16)> {
    let parts: Vec<&str> = pair.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("--binary-task expects two labels `a,b`, got {pair:?}");
    }
    let a = parts[0].parse().with_context(|| format!("--binary-task: {:?}", parts[0]))?;
    let b = parts[1].parse().with_context(|| format!("--binary-task: {:?}", parts[1]))?;
    Ok((a, b))
}

/// Explicit lists are taken literally (and later rejected if a binary-only
/// kind meets multiclass data); the default adapts to the class count.
fn resolve_kinds(bounds: &Option<Vec<String>>, n_classes: usize) -> Result<Vec<BoundKind>> {
    match bounds {
        Some(list) => list
            .iter()
            .map(|s| s.parse::<BoundKind>().map_err(|e| anyhow!("--bounds {s:?}: {e}")))
            .collect(),
        None => Ok(BoundKind::ALL
            .into_iter()
            .filter(|k| n_classes == 2 || !k.binary_only())
            .collect()),
    }
}

fn resolve_alpha(alpha: &Option<String>, mode: Mode) -> Result<AlphaMode> {
    match alpha {
        Some(s) if s.eq_ignore_ascii_case("learnable") => Ok(AlphaMode::Learn),
        Some(s) => s.parse().map_err(|e| anyhow!("--alpha {s:?}: {e}")),
        // Rényi order 1.1 is the multi-view default; the one-view baselines
        // use plain KL.
        None => Ok(match mode {
            Mode::MultiView => AlphaMode::Fixed(1.1),
            _ => AlphaMode::Kl,
        }),
    }
}

fn resolve_mode(single_view: Option<usize>, concat: bool) -> Result<Mode> {
    match (single_view, concat) {
        (Some(0), _) => bail!("--single-view indices are 1-based"),
        (Some(k), _) => Ok(Mode::SingleView(k - 1)),
        (None, true) => Ok(Mode::Concat),
        (None, false) => Ok(Mode::MultiView),
    }
}

fn seed_list(base: u64, count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        bail!("--seeds must be at least 1");
    }
    Ok((base..base + count).collect())
}

fn print_aggregates(file: &RunFile) {
    println!(
        "dataset {} · mode {} · alpha {} · delta {} · depth {} · {} trees/view",
        file.dataset, file.mode, file.alpha, file.delta, file.depth, file.trees
    );
    println!(
        "{:<12} {:>4} {:>11} {:>9} {:>9} {:>9} {:>9}",
        "kind", "runs", "certified", "gibbs", "disag", "mv-train", "mv-test"
    );
    for a in &file.aggregates {
        let test = a
            .mean_mv_test_risk
            .map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<12} {:>4} {:>11.4} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            a.kind.as_str(),
            a.runs,
            a.mean_certified,
            a.mean_gibbs,
            a.mean_disagreement,
            a.mean_mv_train_risk,
            test
        );
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = args.source.load(args.seed)?;
    let mode = resolve_mode(args.single_view, args.concat)?;
    let cfg = TrainConfig {
        kinds: resolve_kinds(&args.bounds, ds.n_classes)?,
        alpha: resolve_alpha(&args.alpha, mode)?,
        mode,
        trees: args.trees,
        depth: args.depth.levels(),
        seeds: seed_list(args.seed, args.seeds)?,
        test_fraction: args.test_frac,
        labeled_fraction: args.labeled_frac,
        delta: args.delta,
        iters: args.iters,
        optimizer: args.optimizer.map(OptChoice::to_kind),
    };
    let file = run_training(&ds, &cfg)?;
    write_json(&args.out, &file)?;
    print_aggregates(&file);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let files: Vec<RunFile> = args.files.iter().map(|p| read_run_file(p)).collect::<Result<_>>()?;
    let tables = build_report(&files)?;
    fs::write(&args.out, &tables.csv)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let plot_path = args
        .plot
        .unwrap_or_else(|| args.out.with_extension("plot.json"));
    fs::write(&plot_path, canonical_json(&tables.plot)?)
        .with_context(|| format!("writing {}", plot_path.display()))?;
    println!("wrote {} and {}", args.out.display(), plot_path.display());
    Ok(())
}

/// Summary series per bound kind: certified bound, Gibbs risk, and
/// majority-vote risk (test when available) as functions of the axis value.
fn sweep_summary(axis: &str, cells: &[(f64, RunFile)]) -> Value {
    let mut kinds: Vec<BoundKind> = Vec::new();
    for (_, file) in cells {
        for a in &file.aggregates {
            if !kinds.contains(&a.kind) {
                kinds.push(a.kind);
            }
        }
    }
    let series: Vec<Value> = kinds
        .iter()
        .map(|&kind| {
            let points: Vec<Value> = cells
                .iter()
                .filter_map(|(x, file)| {
                    file.aggregates.iter().find(|a| a.kind == kind).map(|a| {
                        json!({
                            "x": x,
                            "certified": a.mean_certified,
                            "gibbs": a.mean_gibbs,
                            "bayes": a.mean_mv_test_risk.unwrap_or(a.mean_mv_train_risk),
                        })
                    })
                })
                .collect();
            json!({ "kind": kind.as_str(), "points": points })
        })
        .collect();
    json!({ "schema": 1, "axis": axis, "series": series })
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let ds = args.source.load(args.seed)?;
    let kinds = resolve_kinds(&args.bounds, ds.n_classes)?;
    let seeds = seed_list(args.seed, args.seeds)?;
    let base = TrainConfig {
        kinds,
        alpha: resolve_alpha(&args.alpha, Mode::MultiView)?,
        mode: Mode::MultiView,
        trees: args.trees,
        depth: args.depth.levels(),
        seeds,
        test_fraction: args.test_frac,
        labeled_fraction: args.labeled_frac,
        delta: args.delta,
        iters: args.iters,
        optimizer: args.optimizer.map(OptChoice::to_kind),
    };

    // (axis value, per-cell config) grid.
    let cells: Vec<(f64, TrainConfig)> = match args.axis {
        Axis::LabeledFrac => [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0]
            .into_iter()
            .map(|f| {
                let mut cfg = base.clone();
                cfg.labeled_fraction = f;
                (f, cfg)
            })
            .collect(),
        Axis::Alpha => {
            let alphas = args.alphas.clone().unwrap_or_default();
            if alphas.is_empty() {
                bail!("empty sweep grid: --axis alpha needs --alphas with at least one order");
            }
            alphas
                .into_iter()
                .map(|a| {
                    if !(a.is_finite() && a > 1.0) {
                        bail!("--alphas: order {a} is not > 1");
                    }
                    let mut cfg = base.clone();
                    cfg.alpha = AlphaMode::Fixed(a);
                    Ok((a, cfg))
                })
                .collect::<Result<_>>()?
        }
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let axis = args.axis.name();
    let results: Vec<(f64, Result<RunFile>)> = cells
        .par_iter()
        .map(|(x, cfg)| {
            let res = run_training(&ds, cfg).and_then(|file| {
                let path = args.out.join(format!("sweep-{axis}-{x}.json"));
                write_json(&path, &file)?;
                Ok(file)
            });
            (*x, res)
        })
        .collect();

    let failures: Vec<String> = results
        .iter()
        .filter_map(|(x, r)| r.as_ref().err().map(|e| format!("{axis}={x}: {e:#}")))
        .collect();
    if !failures.is_empty() {
        bail!(
            "sweep failed for {} of {} cells:\n  {}",
            failures.len(),
            results.len(),
            failures.join("\n  ")
        );
    }
    let done: Vec<(f64, RunFile)> =
        results.into_iter().map(|(x, r)| (x, r.expect("failures handled above"))).collect();
    let summary = sweep_summary(axis, &done);
    let summary_path = args.out.join("summary.json");
    fs::write(&summary_path, canonical_json(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    println!("wrote {} cells + summary.json to {}", done.len(), args.out.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let report = run_audit(&AuditConfig {
        instances: args.instances,
        grad_points: args.grad_points,
        seed: args.seed,
    })?;
    for line in &report.lines {
        println!(
            "{} {} — {}",
            if line.ok { "PASS" } else { "FAIL" },
            line.name,
            line.detail
        );
    }
    if !report.all_ok() {
        bail!("verification failed");
    }
    println!("all {} checks passed", report.lines.len());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let (v, m, c, d, noise) = parse_synth_spec(&args.spec)?;
    let ds = synth_dataset(v, m, c, d, &noise, args.seed)?;
    save_dataset(&ds, &args.out)?;
    println!(
        "wrote {} ({} views × {} samples, {} classes) to {}",
        ds.name,
        ds.n_views(),
        ds.n_samples(),
        ds.n_classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_poison(args: PoisonArgs) -> Result<()> {
    if args.views.iter().any(|&k| k == 0) {
        bail!("--views indices are 1-based");
    }
    let ds = load_dataset(&args.data)?;
    let targets: Vec<usize> = args.views.iter().map(|&k| k - 1).collect();
    let poisoned = poison_views(&ds, &targets, args.sigma, args.seed)?;
    save_dataset(&poisoned, &args.out)?;
    println!(
        "wrote {} (views {:?} corrupted at sigma {}) to {}",
        poisoned.name,
        args.views,
        args.sigma,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Train(a) => cmd_train(a),
        Command::Report(a) => cmd_report(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Poison(a) => cmd_poison(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
