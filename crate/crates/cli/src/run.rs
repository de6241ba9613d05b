//! The training pipeline shared by `train` and `sweep`: split the data,
//! grow one forest per view, cache predictions, minimize (or just evaluate)
//! each requested bound, and record the certificate next to the empirical
//! majority-vote risk.

use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use vouch_core::{
    evaluate, minimize, mv_risk_on, predict_cache, train_forest, AlphaMode, BoundKind,
    EvalConfig, Matrix, OptimConfig, OptimizerKind, PosteriorParams, PredictionCache, Priors,
    TreeConfig, ViewEnsemble,
};

use crate::data::{split, MultiViewDataset, SplitSpec};
use crate::report::{aggregate, RunFile, RunRecord, SCHEMA_VERSION};

/// Which ensemble a run certifies. The baselines reuse the multi-view
/// machinery on a derived one-view task rather than a separate code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    MultiView,
    /// Zero-based view index.
    SingleView(usize),
    /// All views' features joined into one view.
    Concat,
}

impl Mode {
    /// Stable label used in run files: `multiview`, `view-k` (one-based),
    /// or `concat`.
    pub fn label(&self) -> String {
        match self {
            Mode::MultiView => "multiview".into(),
            Mode::SingleView(v) => format!("view-{}", v + 1),
            Mode::Concat => "concat".into(),
        }
    }
}

/// Everything `train` needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub kinds: Vec<BoundKind>,
    pub alpha: AlphaMode,
    pub mode: Mode,
    pub trees: usize,
    pub depth: usize,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub labeled_fraction: f64,
    pub delta: f64,
    pub iters: usize,
    pub optimizer: Option<OptimizerKind>,
}

impl TrainConfig {
    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            eval: EvalConfig {
                delta: self.delta,
                ..EvalConfig::default()
            },
            optimizer: self.optimizer,
            max_iters: self.iters,
            ..OptimConfig::default()
        }
    }
}

/// One seed's materialized split. The unlabeled rows' hidden labels stay
/// behind in the dataset: nothing past this point can read them.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub n_classes: usize,
    pub train_views: Vec<Matrix>,
    pub train_labels: Vec<u16>,
    pub unlab_views: Option<Vec<Matrix>>,
    pub test_views: Option<Vec<Matrix>>,
    pub test_labels: Vec<u16>,
}

impl TaskData {
    pub fn from_split(
        ds: &MultiViewDataset,
        idx: &crate::data::SplitIndices,
    ) -> Self {
        let take = |rows: &[usize]| -> Vec<Matrix> {
            ds.views.iter().map(|v| v.select_rows(rows)).collect()
        };
        // The unlabeled pool = rows the split left unlabeled plus any pool
        // shipped with the dataset itself.
        let mut unlab: Vec<Vec<&Matrix>> = vec![Vec::new(); ds.n_views()];
        let from_split = take(&idx.unlabeled);
        if !idx.unlabeled.is_empty() {
            for (v, m) in from_split.iter().enumerate() {
                unlab[v].push(m);
            }
        }
        if let Some(pool) = &ds.unlabeled {
            for (v, m) in pool.iter().enumerate() {
                unlab[v].push(m);
            }
        }
        let unlab_views = if unlab[0].is_empty() {
            None
        } else {
            Some(unlab.iter().map(|parts| Matrix::vstack(parts)).collect())
        };
        TaskData {
            n_classes: ds.n_classes,
            train_views: take(&idx.labeled),
            train_labels: idx.labeled.iter().map(|&i| ds.labels[i]).collect(),
            unlab_views,
            test_views: (!idx.test.is_empty()).then(|| take(&idx.test)),
            test_labels: idx.test.iter().map(|&i| ds.labels[i]).collect(),
        }
    }

    /// Restricts to one view or concatenates all views into one.
    pub fn apply_mode(self, mode: Mode) -> Result<Self> {
        let pick = |views: Vec<Matrix>, v: usize| vec![views[v].clone()];
        let join = |views: Vec<Matrix>| {
            let refs: Vec<&Matrix> = views.iter().collect();
            vec![Matrix::hstack(&refs)]
        };
        match mode {
            Mode::MultiView => Ok(self),
            Mode::SingleView(v) => {
                if v >= self.train_views.len() {
                    bail!(
                        "view {} requested but the dataset has {} views",
                        v + 1,
                        self.train_views.len()
                    );
                }
                Ok(TaskData {
                    train_views: pick(self.train_views, v),
                    unlab_views: self.unlab_views.map(|u| pick(u, v)),
                    test_views: self.test_views.map(|t| pick(t, v)),
                    ..self
                })
            }
            Mode::Concat => Ok(TaskData {
                train_views: join(self.train_views),
                unlab_views: self.unlab_views.map(join),
                test_views: self.test_views.map(join),
                ..self
            }),
        }
    }
}

/// Per-seed immutable substrate shared by every bound kind: the forests'
/// prediction cache and the uniform priors.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub cache: PredictionCache,
    pub priors: Priors,
}

pub fn build_context(task: &TaskData, trees: usize, depth: usize, seed: u64) -> Result<SeedContext> {
    let tree_cfg = TreeConfig {
        n_trees: trees,
        max_depth: depth,
        seed,
    };
    let ensembles: Vec<ViewEnsemble> = task
        .train_views
        .iter()
        .enumerate()
        .map(|(v, feats)| train_forest(feats, &task.train_labels, task.n_classes, v, &tree_cfg))
        .collect::<Result<_, _>>()?;
    let cache = predict_cache(
        &ensembles,
        &task.train_views,
        task.unlab_views.as_deref(),
        task.test_views.as_deref(),
    )?;
    let priors = Priors::uniform(cache.voters_per_view());
    Ok(SeedContext { cache, priors })
}

/// Trains (or, for the evaluation-only kinds, certifies at the priors) one
/// bound kind over one seed's context.
pub fn train_one(
    kind: BoundKind,
    ctx: &SeedContext,
    task: &TaskData,
    alpha: AlphaMode,
    cfg: &OptimConfig,
    seed: u64,
    group: &str,
) -> Result<RunRecord> {
    let t0 = Instant::now();
    let (params, report, objective, converged, iterations, trace_len, optimizer) =
        if kind.is_optimizable() {
            let res = minimize(
                kind,
                &ctx.cache,
                &task.train_labels,
                &ctx.priors,
                alpha,
                cfg,
            )?;
            (
                res.params,
                res.report,
                Some(res.objective),
                Some(res.converged),
                Some(res.iterations),
                res.trace.len(),
                Some(res.optimizer.to_string()),
            )
        } else {
            let params = PosteriorParams::init(&ctx.priors, alpha);
            let report = evaluate(
                kind,
                &ctx.cache,
                &task.train_labels,
                &ctx.priors,
                &params,
                &cfg.eval,
            )?;
            (params, report, None, None, None, 0, None)
        };

    let rho = params.rho();
    let q = params.q();
    let mv_train_risk = mv_risk_on(
        &ctx.cache,
        &task.train_labels,
        &rho,
        &q,
        ctx.cache.labeled_range(),
    )?;
    let mv_test_risk = if ctx.cache.n_test() > 0 {
        Some(mv_risk_on(
            &ctx.cache,
            &task.test_labels,
            &rho,
            &q,
            ctx.cache.test_range(),
        )?)
    } else {
        None
    };

    Ok(RunRecord {
        kind,
        group: group.to_string(),
        seed,
        certified: report.certified,
        raw: report.raw,
        objective,
        converged,
        iterations,
        trace_len,
        optimizer,
        gibbs: report.stats.gibbs,
        joint: report.stats.joint,
        disagreement: report.stats.disagreement,
        divergence: report.divergence,
        mv_train_risk,
        mv_test_risk,
        rho,
        lambda: report.lambda,
        lambda2: report.lambda2,
        gamma: report.gamma,
        alpha_hyper: report.alpha_hyper,
        alpha_views: report.alpha_views,
        m: report.stats.m,
        n: report.stats.n,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

/// The full `train` pipeline: every seed draws its own split and forests
/// (both from the run seed), and all requested kinds share them.
pub fn run_training(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<RunFile> {
    if cfg.kinds.is_empty() {
        bail!("no bound kinds requested");
    }
    for &kind in &cfg.kinds {
        if kind.binary_only() && ds.n_classes != 2 {
            bail!(
                "bound {kind} is binary-only, but dataset {} has {} classes",
                ds.name,
                ds.n_classes
            );
        }
    }
    let group = cfg.mode.label();
    let mut records = Vec::with_capacity(cfg.seeds.len() * cfg.kinds.len());
    let optim = cfg.optim_config();
    for &seed in &cfg.seeds {
        let idx = split(
            ds,
            &SplitSpec {
                seed,
                test_fraction: cfg.test_fraction,
                labeled_fraction: cfg.labeled_fraction,
            },
        )?;
        let task = TaskData::from_split(ds, &idx).apply_mode(cfg.mode)?;
        let ctx = build_context(&task, cfg.trees, cfg.depth, seed)?;
        for &kind in &cfg.kinds {
            records.push(
                train_one(kind, &ctx, &task, cfg.alpha, &optim, seed, &group).map_err(|e| {
                    anyhow!("kind {kind}, seed {seed}: {e}")
                })?,
            );
        }
    }
    let aggregates = aggregate(&records);
    Ok(RunFile {
        schema: SCHEMA_VERSION,
        dataset: ds.name.clone(),
        mode: group,
        n_classes: ds.n_classes,
        alpha: cfg.alpha.to_string(),
        delta: cfg.delta,
        depth: cfg.depth,
        trees: cfg.trees,
        labeled_fraction: cfg.labeled_fraction,
        test_fraction: cfg.test_fraction,
        records,
        aggregates,
    })
}
