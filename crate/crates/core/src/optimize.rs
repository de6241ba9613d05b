//! Gradient descent on the certified objectives.
//!
//! Every raw parameter of [`PosteriorParams`] is flattened into one vector —
//! `[ρ logits | Q logits | λ, λ₂, γ | α raws]` — and stepped with either
//! AdamW (decoupled weight decay applied to the logits only) or the
//! parameter-free COCOB coin-betting optimizer. After each step the knobs
//! are clamped into their valid ranges and each logit block is shifted to
//! log-probability form, which changes nothing through the softmax but
//! keeps the iterates well conditioned.
//!
//! [`grad_check`] validates the analytic gradients of
//! [`crate::bounds::objective_with_grad`] against central finite
//! differences, tightening the small-kl bisection for both paths so the
//! comparison is not dominated by inversion staircase noise.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use thiserror::Error;

use crate::bounds::{
    objective_with_grad, AlphaMode, AlphaState, BoundError, BoundKind, BoundReport, EvalConfig,
    ParamGrads, PosteriorParams, Priors,
};
use crate::numeric::{fabs, log_sum_exp, sqrt};
use crate::voters::PredictionCache;

const LAMBDA_MIN: f64 = 1e-4;
const LAMBDA_MAX: f64 = 2.0 - 1e-4;
const GAMMA_MIN: f64 = 1e-4;
/// Learnable-order raws are clamped so `α = 1 + exp(raw)` stays strictly
/// above 1 in double precision (`exp(-30) ≈ 1e-13`) and below ≈ 21.
const ALPHA_RAW_MIN: f64 = -30.0;
const ALPHA_RAW_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay on the logits.
    AdamW,
    /// COCOB coin-betting; parameter-free, default for the tandem bound
    /// whose curvature is poorly served by a fixed learning rate.
    CoinBetting,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::CoinBetting => "cocob",
        })
    }
}

/// Error from parsing an [`OptimizerKind`] name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptimizerError;

impl fmt::Display for ParseOptimizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown optimizer (expected `adamw` or `cocob`)")
    }
}

impl FromStr for OptimizerKind {
    type Err = ParseOptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adamw" => Ok(OptimizerKind::AdamW),
            "cocob" => Ok(OptimizerKind::CoinBetting),
            _ => Err(ParseOptimizerError),
        }
    }
}

/// Optimization settings. The defaults reproduce the reference training
/// setup: 1000 iterations, AdamW at `lr = 0.1` with weight decay `0.05`,
/// convergence once the objective moves less than `1e-9` between
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub eval: EvalConfig,
    /// `None` picks per-kind defaults: COCOB for the tandem bound, AdamW
    /// otherwise.
    pub optimizer: Option<OptimizerKind>,
    pub max_iters: usize,
    /// Convergence threshold on `|Δobjective|`.
    pub tol: f64,
    pub lr: f64,
    /// Decoupled weight decay, applied to logits only.
    pub weight_decay: f64,
    /// COCOB's initial wealth scale.
    pub cocob_scale: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            optimizer: None,
            max_iters: 1000,
            tol: 1e-9,
            lr: 0.1,
            weight_decay: 0.05,
            cocob_scale: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("objective, gradient, or parameters became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
}

/// Index map between [`PosteriorParams`] and the flat vector.
struct Layout {
    voters: Vec<usize>,
    n_views: usize,
    n_logits: usize,
    learn_alpha: bool,
}

impl Layout {
    fn new(params: &PosteriorParams) -> Self {
        let voters: Vec<usize> = params.q_logits.iter().map(Vec::len).collect();
        let n_views = params.n_views();
        let n_logits = n_views + voters.iter().sum::<usize>();
        Self {
            voters,
            n_views,
            n_logits,
            learn_alpha: matches!(params.alpha, AlphaState::Learn { .. }),
        }
    }

    fn len(&self) -> usize {
        self.n_logits + 3 + if self.learn_alpha { 1 + self.n_views } else { 0 }
    }

    fn idx_lambda(&self) -> usize {
        self.n_logits
    }

    fn flatten(&self, p: &PosteriorParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&p.rho_logits);
        for q in &p.q_logits {
            x.extend_from_slice(q);
        }
        x.push(p.lambda);
        x.push(p.lambda2);
        x.push(p.gamma);
        if let AlphaState::Learn {
            raw_hyper,
            raw_views,
        } = &p.alpha
        {
            x.push(*raw_hyper);
            x.extend_from_slice(raw_views);
        }
        x
    }

    fn flatten_grads(&self, g: &ParamGrads) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&g.rho_logits);
        for q in &g.q_logits {
            x.extend_from_slice(q);
        }
        x.push(g.lambda);
        x.push(g.lambda2);
        x.push(g.gamma);
        if self.learn_alpha {
            x.push(g.alpha_hyper_raw);
            x.extend_from_slice(&g.alpha_view_raws);
        }
        x
    }

    fn write_params(&self, x: &[f64], p: &mut PosteriorParams) {
        p.rho_logits.copy_from_slice(&x[..self.n_views]);
        let mut at = self.n_views;
        for q in &mut p.q_logits {
            let k = q.len();
            q.copy_from_slice(&x[at..at + k]);
            at += k;
        }
        p.lambda = x[at];
        p.lambda2 = x[at + 1];
        p.gamma = x[at + 2];
        if let AlphaState::Learn {
            raw_hyper,
            raw_views,
        } = &mut p.alpha
        {
            *raw_hyper = x[at + 3];
            raw_views.copy_from_slice(&x[at + 4..at + 4 + self.n_views]);
        }
    }

    fn is_logit(&self, i: usize) -> bool {
        i < self.n_logits
    }

    /// Clamp the knobs into their valid ranges and shift every logit block
    /// to log-probability form (softmax-invariant).
    fn apply_constraints(&self, x: &mut [f64]) {
        let at = self.idx_lambda();
        x[at] = x[at].clamp(LAMBDA_MIN, LAMBDA_MAX);
        x[at + 1] = x[at + 1].clamp(LAMBDA_MIN, LAMBDA_MAX);
        x[at + 2] = x[at + 2].max(GAMMA_MIN);
        if self.learn_alpha {
            for a in &mut x[at + 3..at + 4 + self.n_views] {
                *a = a.clamp(ALPHA_RAW_MIN, ALPHA_RAW_MAX);
            }
        }
        let mut start = 0;
        let renorm = |block: &mut [f64]| {
            let lse = log_sum_exp(block);
            for v in block {
                *v -= lse;
            }
        };
        renorm(&mut x[start..self.n_views]);
        start = self.n_views;
        for &k in &self.voters {
            renorm(&mut x[start..start + k]);
            start += k;
        }
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    lr: f64,
    weight_decay: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            weight_decay,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], layout: &Layout) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(ADAM_BETA1, self.t as f64);
        let bc2 = 1.0 - libm::pow(ADAM_BETA2, self.t as f64);
        for i in 0..x.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            x[i] -= self.lr * m_hat / (sqrt(v_hat) + ADAM_EPS);
            if layout.is_logit(i) {
                x[i] *= 1.0 - self.lr * self.weight_decay;
            }
        }
    }
}

/// COCOB-Backprop: each coordinate is a gambler betting against its own
/// gradient stream; the bet fraction adapts without any learning rate.
struct CoinBetting {
    w0: Vec<f64>,
    max_grad: Vec<f64>,
    grad_sum: Vec<f64>,
    reward: Vec<f64>,
    theta: Vec<f64>,
    scale: f64,
}

impl CoinBetting {
    fn new(x0: &[f64], scale: f64) -> Self {
        let n = x0.len();
        Self {
            w0: x0.to_vec(),
            max_grad: vec![0.0; n],
            grad_sum: vec![0.0; n],
            reward: vec![0.0; n],
            theta: vec![0.0; n],
            scale,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64]) {
        for i in 0..x.len() {
            let gi = g[i];
            self.max_grad[i] = self.max_grad[i].max(fabs(gi));
            let l = self.max_grad[i];
            if l == 0.0 {
                continue;
            }
            self.grad_sum[i] += fabs(gi);
            self.reward[i] = (self.reward[i] + (x[i] - self.w0[i]) * -gi).max(0.0);
            self.theta[i] += -gi;
            let beta = self.theta[i] / (l * (self.grad_sum[i] + l).max(self.scale * l));
            x[i] = self.w0[i] + beta * (l + self.reward[i]);
        }
    }
}

enum Stepper {
    AdamW(AdamW),
    CoinBetting(CoinBetting),
}

impl Stepper {
    fn step(&mut self, x: &mut [f64], g: &[f64], layout: &Layout) {
        match self {
            Stepper::AdamW(a) => a.step(x, g, layout),
            Stepper::CoinBetting(c) => c.step(x, g),
        }
    }
}

/// Result of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    /// Parameters at the final evaluation.
    pub params: PosteriorParams,
    /// Bound report at those parameters.
    pub report: BoundReport,
    /// Final barrier-inclusive objective.
    pub objective: f64,
    /// Whether `|Δobjective| ≤ tol` fired before the iteration budget.
    pub converged: bool,
    /// Optimizer steps taken.
    pub iterations: usize,
    /// The optimizer that ran.
    pub optimizer: OptimizerKind,
    /// Objective after each evaluation, final evaluation included
    /// (`trace.len() == iterations + 1`).
    pub trace: Vec<f64>,
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Minimizes the training objective of `kind` over the two-level posterior
/// (and the kind's scalar knobs), starting from the priors.
pub fn minimize(
    kind: BoundKind,
    cache: &PredictionCache,
    labels: &[u16],
    priors: &Priors,
    alpha_mode: AlphaMode,
    cfg: &OptimConfig,
) -> Result<MinimizeResult, OptimizeError> {
    let mut params = PosteriorParams::init(priors, alpha_mode);
    let layout = Layout::new(&params);
    let optimizer = cfg.optimizer.unwrap_or(if kind == BoundKind::CTandem {
        OptimizerKind::CoinBetting
    } else {
        OptimizerKind::AdamW
    });
    let mut x = layout.flatten(&params);
    let mut stepper = match optimizer {
        OptimizerKind::AdamW => Stepper::AdamW(AdamW::new(x.len(), cfg.lr, cfg.weight_decay)),
        OptimizerKind::CoinBetting => Stepper::CoinBetting(CoinBetting::new(&x, cfg.cocob_scale)),
    };

    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut prev: Option<f64> = None;
    for iteration in 0..cfg.max_iters {
        let ev = objective_with_grad(kind, cache, labels, priors, &params, &cfg.eval)?;
        let grads = layout.flatten_grads(&ev.grads);
        if !ev.objective.is_finite() || !all_finite(&grads) {
            return Err(OptimizeError::NonFinite { iteration });
        }
        trace.push(ev.objective);
        if let Some(p) = prev {
            if fabs(p - ev.objective) <= cfg.tol {
                return Ok(MinimizeResult {
                    params,
                    report: ev.report,
                    objective: ev.objective,
                    converged: true,
                    iterations: iteration,
                    optimizer,
                    trace,
                });
            }
        }
        prev = Some(ev.objective);
        stepper.step(&mut x, &grads, &layout);
        layout.apply_constraints(&mut x);
        if !all_finite(&x) {
            return Err(OptimizeError::NonFinite { iteration });
        }
        layout.write_params(&x, &mut params);
    }

    // Budget exhausted: evaluate once more so the report matches the final
    // parameters.
    let ev = objective_with_grad(kind, cache, labels, priors, &params, &cfg.eval)?;
    if !ev.objective.is_finite() {
        return Err(OptimizeError::NonFinite {
            iteration: cfg.max_iters,
        });
    }
    trace.push(ev.objective);
    Ok(MinimizeResult {
        params,
        report: ev.report,
        objective: ev.objective,
        converged: false,
        iterations: cfg.max_iters,
        optimizer,
        trace,
    })
}

/// Report of a finite-difference gradient validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error across all raw parameters, measured as
    /// `|a − n| / (max(|a|, |n|) + 1e-3)`.
    pub max_rel_err: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub n_params: usize,
}

/// Compares the analytic gradient to central finite differences
/// (`h = 1e-5`) at `params`. Both paths run with the bisection tightened to
/// `1e-15` so that the inversion staircase sits far below the probe step:
/// the constrained objectives multiply an inverted rate by the barrier slope
/// (100 by default), so a staircase of width `w` shows up in the difference
/// quotient as noise of order `100·w / 2h`, and `w` has to sit near the
/// floating-point floor for small-gradient coordinates to pass.
pub fn grad_check(
    kind: BoundKind,
    cache: &PredictionCache,
    labels: &[u16],
    priors: &Priors,
    params: &PosteriorParams,
    cfg: &OptimConfig,
) -> Result<GradCheckReport, OptimizeError> {
    let mut eval_cfg = cfg.eval;
    eval_cfg.kl_eps = 1e-15;
    let layout = Layout::new(params);
    let base = objective_with_grad(kind, cache, labels, priors, params, &eval_cfg)?;
    let analytic = layout.flatten_grads(&base.grads);
    let x0 = layout.flatten(params);
    let h = 1e-5;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        n_params: x0.len(),
    };
    let mut probe = params.clone();
    for i in 0..x0.len() {
        let mut x = x0.clone();
        x[i] = x0[i] + h;
        layout.write_params(&x, &mut probe);
        let up = objective_with_grad(kind, cache, labels, priors, &probe, &eval_cfg)?.objective;
        x[i] = x0[i] - h;
        layout.write_params(&x, &mut probe);
        let dn = objective_with_grad(kind, cache, labels, priors, &probe, &eval_cfg)?.objective;
        let numeric = (up - dn) / (2.0 * h);
        let rel =
            fabs(analytic[i] - numeric) / (fabs(analytic[i]).max(fabs(numeric)) + 1e-3);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Binary two-view cache with mixed-quality voters; 8 labeled + 2
    /// unlabeled samples.
    fn fixture() -> (PredictionCache, Vec<u16>) {
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let view0 = vec![
            0, 0, 0, 0, 1, 1, 1, 1, 0, 1, // perfect
            0, 0, 1, 0, 1, 1, 0, 1, 1, 1, // two mistakes
            1, 0, 0, 1, 1, 0, 1, 1, 0, 0, // three mistakes
        ];
        let view1 = vec![
            0, 1, 0, 0, 1, 1, 1, 0, 0, 1, // two mistakes
            0, 0, 0, 1, 0, 1, 1, 1, 1, 0, // two mistakes
        ];
        let cache =
            PredictionCache::from_predictions(vec![view0, view1], vec![3, 2], 2, 8, 2, 0).unwrap();
        (cache, labels)
    }

    fn nudged(priors: &Priors, mode: AlphaMode) -> PosteriorParams {
        let mut params = PosteriorParams::init(priors, mode);
        params.rho_logits = vec![0.15, -0.25];
        params.q_logits = vec![vec![0.2, -0.3, 0.05], vec![-0.15, 0.3]];
        params.lambda = 0.7;
        params.lambda2 = 1.2;
        params.gamma = 1.1;
        if let AlphaState::Learn { raw_views, .. } = &mut params.alpha {
            raw_views[0] = 0.5;
            raw_views[1] = -0.4;
        }
        params
    }

    #[test]
    fn adamw_first_step_from_zero_state_is_the_signed_learning_rate() {
        let layout = Layout {
            voters: vec![],
            n_views: 0,
            n_logits: 0,
            learn_alpha: false,
        };
        let mut opt = AdamW::new(1, 0.1, 0.05);
        let mut x = vec![1.0];
        let g = vec![2.0];
        opt.step(&mut x, &g, &layout);
        // First step: m̂ = g, v̂ = g², so Δ = −lr·g/(|g| + ε).
        assert_abs_diff_eq!(x[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), epsilon = 1e-15);
    }

    #[test]
    fn adamw_settles_a_quadratic_near_its_minimum() {
        let layout = Layout {
            voters: vec![],
            n_views: 0,
            n_logits: 0,
            learn_alpha: false,
        };
        let mut opt = AdamW::new(1, 0.1, 0.05);
        let mut x = vec![3.0];
        for _ in 0..400 {
            let g = vec![2.0 * x[0]];
            opt.step(&mut x, &g, &layout);
        }
        assert!(x[0].abs() < 0.15, "late Adam iterate {}", x[0]);
    }

    #[test]
    fn coin_betting_reaches_the_minimum_of_an_absolute_value() {
        let mut opt = CoinBetting::new(&[0.0], 100.0);
        let mut x = vec![0.0];
        for _ in 0..1000 {
            let g = vec![if x[0] >= 1.0 { 1.0 } else { -1.0 }];
            opt.step(&mut x, &g);
        }
        assert!((x[0] - 1.0).abs() < 0.2, "COCOB iterate {}", x[0]);
    }

    #[test]
    fn minimize_descends_and_reports_consistently() {
        let (cache, labels) = fixture();
        let priors = Priors::uniform(cache.voters_per_view());
        let cfg = OptimConfig::default();
        let res = minimize(
            BoundKind::K,
            &cache,
            &labels,
            &priors,
            AlphaMode::Kl,
            &cfg,
        )
        .unwrap();
        assert_eq!(res.trace.len(), res.iterations + 1);
        assert!(res.trace.last().unwrap() <= res.trace.first().unwrap());
        assert!(res.report.certified >= 0.0 && res.report.certified <= 4.0);
        assert_eq!(res.optimizer, OptimizerKind::AdamW);
        // K has no λ-form knobs: their gradients are identically zero, so
        // they must not move.
        assert_abs_diff_eq!(res.params.lambda, 1.0);
        assert_abs_diff_eq!(res.params.gamma, 1.0);
        // Posteriors remain simplexes after the logit renormalization.
        let rho = res.params.rho();
        assert_abs_diff_eq!(rho.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn minimize_moves_lambda_for_lambda_form_bounds() {
        let (cache, labels) = fixture();
        let priors = Priors::uniform(cache.voters_per_view());
        let cfg = OptimConfig {
            max_iters: 50,
            ..OptimConfig::default()
        };
        let res = minimize(
            BoundKind::R,
            &cache,
            &labels,
            &priors,
            AlphaMode::Kl,
            &cfg,
        )
        .unwrap();
        assert!(res.params.lambda != 1.0);
        assert!(res.params.lambda >= LAMBDA_MIN && res.params.lambda <= LAMBDA_MAX);
    }

    #[test]
    fn tandem_bound_defaults_to_coin_betting() {
        let (cache, labels) = fixture();
        let priors = Priors::uniform(cache.voters_per_view());
        let cfg = OptimConfig {
            max_iters: 10,
            ..OptimConfig::default()
        };
        let res = minimize(
            BoundKind::CTandem,
            &cache,
            &labels,
            &priors,
            AlphaMode::Kl,
            &cfg,
        )
        .unwrap();
        assert_eq!(res.optimizer, OptimizerKind::CoinBetting);
        let forced = minimize(
            BoundKind::CTandem,
            &cache,
            &labels,
            &priors,
            AlphaMode::Kl,
            &OptimConfig {
                optimizer: Some(OptimizerKind::AdamW),
                max_iters: 10,
                ..OptimConfig::default()
            },
        )
        .unwrap();
        assert_eq!(forced.optimizer, OptimizerKind::AdamW);
    }

    #[test]
    fn minimize_is_deterministic() {
        let (cache, labels) = fixture();
        let priors = Priors::uniform(cache.voters_per_view());
        let cfg = OptimConfig {
            max_iters: 60,
            ..OptimConfig::default()
        };
        let a = minimize(
            BoundKind::E,
            &cache,
            &labels,
            &priors,
            AlphaMode::Learn,
            &cfg,
        )
        .unwrap();
        let b = minimize(
            BoundKind::E,
            &cache,
            &labels,
            &priors,
            AlphaMode::Learn,
            &cfg,
        )
        .unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn runaway_learning_rate_is_caught_as_non_finite() {
        let (cache, labels) = fixture();
        let priors = Priors::uniform(cache.voters_per_view());
        let cfg = OptimConfig {
            lr: 1e300,
            max_iters: 5,
            ..OptimConfig::default()
        };
        assert!(minimize(
            BoundKind::R,
            &cache,
            &labels,
            &priors,
            AlphaMode::Kl,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn analytic_gradients_survive_the_finite_difference_audit() {
        let (cache, labels) = fixture();
        let priors = Priors::uniform(cache.voters_per_view());
        let cfg = OptimConfig::default();
        for (kind, mode) in [
            (BoundKind::R, AlphaMode::Kl),
            (BoundKind::E, AlphaMode::Kl),
            (BoundKind::K, AlphaMode::Fixed(1.6)),
            (BoundKind::Ku, AlphaMode::Kl),
            (BoundKind::E2, AlphaMode::Learn),
            (BoundKind::K2, AlphaMode::Kl),
            (BoundKind::R2, AlphaMode::Kl),
            (BoundKind::Ku2, AlphaMode::Fixed(2.0)),
            (BoundKind::CBound, AlphaMode::Kl),
            (BoundKind::CTandem, AlphaMode::Learn),
        ] {
            let params = nudged(&priors, mode);
            let report = grad_check(kind, &cache, &labels, &priors, &params, &cfg).unwrap();
            assert!(
                report.max_rel_err <= 1e-4,
                "{kind} worst {} at index {}",
                report.max_rel_err,
                report.worst_index
            );
        }
    }

    #[test]
    fn layout_round_trips_every_parameter() {
        let priors = Priors::uniform(&[3, 2]);
        let params = nudged(&priors, AlphaMode::Learn);
        let layout = Layout::new(&params);
        let x = layout.flatten(&params);
        assert_eq!(x.len(), layout.len());
        let mut back = PosteriorParams::init(&priors, AlphaMode::Learn);
        layout.write_params(&x, &mut back);
        assert_eq!(back, params);
    }
}
