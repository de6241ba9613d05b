//! Self-audit harness behind the `verify` subcommand: randomized instances
//! pit the fast production paths against independent oracles (brute-force
//! pair enumeration, central finite differences, re-evaluation of returned
//! certificates) and report one pass/fail line per property.

use std::fmt::Write as _;

use anyhow::Result;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha12Rng};
use rand_distr::StandardNormal;
use vouch_core::oracle::{brute_stats, oracle_inequalities};
use vouch_core::{
    empirical_stats, evaluate, grad_check, minimize, AlphaMode, AlphaState, BoundKind, OptimConfig,
    PosteriorParams, PredictionCache, Priors,
};

/// A self-contained randomized problem: cached voter predictions plus a
/// weighting to score them with.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cache: PredictionCache,
    pub labels: Vec<u16>,
    pub rho: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

/// Size envelope for [`random_instance`]. Kept tiny so the quadratic and
/// quartic oracles stay fast.
#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub max_views: usize,
    pub max_voters: usize,
    pub max_samples: usize,
    pub min_classes: usize,
    pub max_classes: usize,
    pub with_unlabeled: bool,
}

impl Default for InstanceShape {
    fn default() -> Self {
        InstanceShape {
            max_views: 3,
            max_voters: 4,
            max_samples: 20,
            min_classes: 2,
            max_classes: 3,
            with_unlabeled: true,
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - hi).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

fn random_weights(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    softmax(&logits)
}

/// Draws voter predictions, labels, and a strictly positive weighting
/// uniformly at random within `shape`.
pub fn random_instance(shape: &InstanceShape, rng: &mut ChaCha12Rng) -> Instance {
    let n_views = rng.random_range(1..=shape.max_views);
    let m = rng.random_range(2..=shape.max_samples);
    let nu = if shape.with_unlabeled {
        rng.random_range(0..=shape.max_samples / 2)
    } else {
        0
    };
    let n_classes = rng.random_range(shape.min_classes..=shape.max_classes);
    let total = m + nu;
    let voters_per_view: Vec<usize> =
        (0..n_views).map(|_| rng.random_range(1..=shape.max_voters)).collect();
    let preds: Vec<Vec<u16>> = voters_per_view
        .iter()
        .map(|&k| {
            (0..k * total)
                .map(|_| rng.random_range(0..n_classes) as u16)
                .collect()
        })
        .collect();
    let labels: Vec<u16> = (0..m).map(|_| rng.random_range(0..n_classes) as u16).collect();
    let cache =
        PredictionCache::from_predictions(preds, voters_per_view.clone(), n_classes, m, nu, 0)
            .expect("random instance dimensions are consistent by construction");
    let rho = random_weights(n_views, rng);
    let q = voters_per_view.iter().map(|&k| random_weights(k, rng)).collect();
    Instance { cache, labels, rho, q }
}

/// Draws posterior parameters strictly inside the feasible region: finite
/// logits, `λ` away from both ends of `(0, 2)`, `γ > 0`, and Rényi orders
/// above 1.
pub fn random_feasible_params(
    priors: &Priors,
    mode: AlphaMode,
    rng: &mut ChaCha12Rng,
) -> PosteriorParams {
    let mut params = PosteriorParams::init(priors, mode);
    let jitter = |rng: &mut ChaCha12Rng| 0.7 * rng.sample::<f64, _>(StandardNormal);
    for z in &mut params.rho_logits {
        *z += jitter(rng);
    }
    for view in &mut params.q_logits {
        for z in view {
            *z += jitter(rng);
        }
    }
    params.lambda = rng.random_range(0.3..1.7);
    params.lambda2 = rng.random_range(0.3..1.7);
    params.gamma = rng.random_range(0.5..1.5);
    match &mut params.alpha {
        AlphaState::Fixed(a) => *a = rng.random_range(1.05..2.5),
        AlphaState::Learn { raw_hyper, raw_views } => {
            *raw_hyper = rng.random_range(-1.0..1.0);
            for r in raw_views {
                *r = rng.random_range(-1.0..1.0);
            }
        }
        AlphaState::Kl => {}
    }
    params
}

/// One pass/fail line of the audit.
#[derive(Debug, Clone)]
pub struct AuditLine {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub lines: Vec<AuditLine>,
}

impl AuditReport {
    pub fn all_ok(&self) -> bool {
        self.lines.iter().all(|l| l.ok)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AuditConfig {
    /// Random instances per statistical check.
    pub instances: usize,
    /// Random feasible points per (bound, alpha-mode) gradient check.
    pub grad_points: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { instances: 100, grad_points: 3, seed: 0 }
    }
}

/// Runs every audit check and collects one line per property.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    let mut lines = Vec::new();
    lines.push(stats_match_oracle(cfg)?);
    lines.push(vote_inequalities_hold(cfg)?);
    lines.push(binary_decomposition_holds(cfg)?);
    lines.push(gradients_match_differences(cfg)?);
    lines.push(certificates_reevaluate(cfg)?);
    Ok(AuditReport { lines })
}

fn stats_match_oracle(cfg: &AuditConfig) -> Result<AuditLine> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x01);
    let shape = InstanceShape::default();
    let mut worst = 0.0f64;
    for _ in 0..cfg.instances {
        let inst = random_instance(&shape, &mut rng);
        let fast = empirical_stats(&inst.cache, &inst.labels, &inst.rho, &inst.q)?;
        let slow = brute_stats(&inst.cache, &inst.labels, &inst.rho, &inst.q)?;
        worst = worst
            .max((fast.gibbs - slow.gibbs).abs())
            .max((fast.joint - slow.joint).abs())
            .max((fast.disagreement - slow.disagreement).abs());
    }
    Ok(AuditLine {
        name: "statistics match pair enumeration".into(),
        ok: worst <= 1e-12,
        detail: format!("max |fast − brute| = {worst:.3e} over {} instances", cfg.instances),
    })
}

fn vote_inequalities_hold(cfg: &AuditConfig) -> Result<AuditLine> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x02);
    let shape = InstanceShape::default();
    let mut min_slack = f64::INFINITY;
    for _ in 0..cfg.instances {
        let inst = random_instance(&shape, &mut rng);
        let ineq = oracle_inequalities(&inst.cache, &inst.labels, &inst.rho, &inst.q)?;
        min_slack = min_slack.min(ineq.first_order).min(ineq.second_order);
    }
    Ok(AuditLine {
        name: "majority-vote oracle inequalities".into(),
        ok: min_slack >= -1e-12,
        detail: format!("min slack = {min_slack:.3e} over {} instances", cfg.instances),
    })
}

fn binary_decomposition_holds(cfg: &AuditConfig) -> Result<AuditLine> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x03);
    let shape = InstanceShape {
        min_classes: 2,
        max_classes: 2,
        with_unlabeled: false,
        ..InstanceShape::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..cfg.instances {
        let inst = random_instance(&shape, &mut rng);
        let s = empirical_stats(&inst.cache, &inst.labels, &inst.rho, &inst.q)?;
        worst = worst.max((s.gibbs - (s.joint + 0.5 * s.disagreement)).abs());
    }
    Ok(AuditLine {
        name: "binary risk decomposition".into(),
        ok: worst <= 1e-12,
        detail: format!("max |ĝ − ê − d̂/2| = {worst:.3e} over {} instances", cfg.instances),
    })
}

const GRAD_ALPHAS: [AlphaMode; 3] = [AlphaMode::Kl, AlphaMode::Fixed(1.3), AlphaMode::Learn];

fn gradients_match_differences(cfg: &AuditConfig) -> Result<AuditLine> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x04);
    // Binary instances so the binary-only bounds participate too.
    let shape = InstanceShape {
        min_classes: 2,
        max_classes: 2,
        ..InstanceShape::default()
    };
    let optim = OptimConfig::default();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for kind in BoundKind::ALL.into_iter().filter(|k| k.is_optimizable()) {
        for point in 0..cfg.grad_points {
            let inst = random_instance(&shape, &mut rng);
            let priors = Priors::uniform(inst.cache.voters_per_view());
            let mode = GRAD_ALPHAS[point % GRAD_ALPHAS.len()];
            let params = random_feasible_params(&priors, mode, &mut rng);
            let report =
                grad_check(kind, &inst.cache, &inst.labels, &priors, &params, &optim)?;
            if report.max_rel_err > worst {
                worst = report.max_rel_err;
                worst_at = format!("{kind} ({mode}, point {point})");
            }
        }
    }
    Ok(AuditLine {
        name: "analytic gradients match central differences".into(),
        ok: worst <= 1e-4,
        detail: format!("max rel err = {worst:.3e} at {worst_at}"),
    })
}

/// Re-evaluating a minimizer's returned parameters must reproduce its
/// certificate bit-for-bit (up to accumulated rounding): the report is not
/// allowed to drift from the parameters it claims to describe.
fn certificates_reevaluate(cfg: &AuditConfig) -> Result<AuditLine> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x05);
    let shape = InstanceShape {
        max_samples: 16,
        min_classes: 2,
        max_classes: 2,
        ..InstanceShape::default()
    };
    let kinds = [BoundKind::K, BoundKind::R, BoundKind::Ku2, BoundKind::CBound];
    let optim = OptimConfig { max_iters: 40, ..OptimConfig::default() };
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for kind in kinds {
        let inst = random_instance(&shape, &mut rng);
        let priors = Priors::uniform(inst.cache.voters_per_view());
        let res = minimize(kind, &inst.cache, &inst.labels, &priors, AlphaMode::Kl, &optim)?;
        let again = evaluate(kind, &inst.cache, &inst.labels, &priors, &res.params, &optim.eval)?;
        let gap = (res.report.certified - again.certified).abs();
        worst = worst.max(gap);
        let _ = write!(detail, "{kind}: {gap:.1e}  ");
    }
    Ok(AuditLine {
        name: "certificates survive re-evaluation".into(),
        ok: worst <= 1e-12,
        detail: detail.trim_end().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_full_audit_passes_at_a_small_budget() {
        let report = run_audit(&AuditConfig { instances: 20, grad_points: 1, seed: 1 }).unwrap();
        assert_eq!(report.lines.len(), 5);
        for line in &report.lines {
            assert!(line.ok, "{}: {}", line.name, line.detail);
        }
    }

    #[test]
    fn random_instances_respect_their_shape() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let shape = InstanceShape::default();
        for _ in 0..50 {
            let inst = random_instance(&shape, &mut rng);
            assert!(inst.cache.n_views() <= shape.max_views);
            assert!(inst.cache.n_labeled() <= shape.max_samples);
            assert!(inst.cache.n_classes() >= 2 && inst.cache.n_classes() <= 3);
            assert!((inst.rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for qv in &inst.q {
                assert!((qv.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(qv.iter().all(|&w| w > 0.0));
            }
        }
    }

    #[test]
    fn feasible_params_stay_inside_the_open_domains() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let priors = Priors::uniform(&[3, 2]);
        for mode in GRAD_ALPHAS {
            let p = random_feasible_params(&priors, mode, &mut rng);
            assert!(p.lambda > 0.0 && p.lambda < 2.0);
            assert!(p.lambda2 > 0.0 && p.lambda2 < 2.0);
            assert!(p.gamma > 0.0);
            if let Some(a) = p.alpha.alpha_hyper() {
                assert!(a > 1.0, "hyper order {a}");
            }
        }
    }
}
