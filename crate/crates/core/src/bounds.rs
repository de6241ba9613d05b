//! PAC-Bayesian risk bounds over the two-level posterior and their training
//! objectives.
//!
//! Every bound is assembled from the same parts:
//!
//! 1. empirical statistics `ĝ`, `ê`, `d̂` of the weighted vote
//!    ([`crate::risks`]);
//! 2. a divergence budget `D = Σ_v ρ_v·D(Q_v‖P_v) + D(ρ‖π)` where `D` is
//!    either KL or a Rényi divergence of order `α > 1`
//!    ([`crate::divergence`]);
//! 3. the complexity rates [`PsiTerms`] mixing `D` with the confidence
//!    level;
//! 4. a bound-specific shape: either the λ-form
//!    `q ↦ q/(1−λ/2) + ψ/(λ(1−λ/2))` or the inverted small-kl form
//!    `q ↦ kl⁻¹(q‖ψ)`.
//!
//! [`eval_bound`] evaluates any bound from precomputed pieces;
//! [`evaluate`] runs the whole pipeline from a prediction cache; and
//! [`objective_with_grad`] additionally returns exact gradients with respect
//! to every raw parameter (logits, λ's, γ, learnable Rényi orders) so the
//! optimizer in [`crate::optimize`] can descend the certified value
//! directly. Constrained regions are enforced with soft log-barriers rather
//! than projections, keeping the objective differentiable everywhere.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{
    kl_categorical_with_grad, kl_inv_lower, kl_inv_upper, log_barrier, renyi_div_with_grad,
    BarrierConfig, DivergenceError, InvMode, SIMPLEX_TOL,
};
use crate::numeric::{exp, fabs, ln, softmax, softmax_pullback, sqrt};
use crate::risks::{empirical_stats, empirical_stats_with_grad, EmpiricalStats};
use crate::voters::{PredictionCache, VoterError};

/// The bound families. The letter names follow the objective they minimize:
/// `R` and `E` are the first/second-order λ-form bounds, `K`-prefixed kinds
/// are their inverted small-kl counterparts, the `2` suffix marks the
/// variants that trade the disagreement term differently, and the last four
/// are the C-bound, the Chebyshev tandem bound, and two single-level
/// baselines that are evaluated but never optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// First-order λ-form: `2·Λ(ĝ, ψ_r, λ)`.
    R,
    /// Second-order λ-form: `2·Λ(ê, ψ_e, λ) + Λ(d̂, ψ_d, λ₂)`.
    E,
    /// First-order inverted: `2·kl⁻¹(ĝ‖ψ_r)`.
    K,
    /// Second-order inverted: `2·kl⁻¹(ê‖ψ_e) + kl⁻¹(d̂‖ψ_d)`.
    Ku,
    /// Joint-error λ-form: `4·Λ(ê, ψ_e, λ)`.
    E2,
    /// Joint-error inverted: `4·kl⁻¹(ê‖ψ_e)`.
    K2,
    /// First-order λ-form with a disagreement credit (binary only).
    R2,
    /// First-order inverted with a disagreement credit (binary only).
    Ku2,
    /// C-bound with inverted statistics (binary only).
    CBound,
    /// Chebyshev–Cantelli tandem bound.
    CTandem,
    /// Single-level square-root baseline; evaluation only.
    McAllester,
    /// Single-level exponential-moment baseline; evaluation only.
    Catoni,
}

impl BoundKind {
    pub const ALL: [BoundKind; 12] = [
        BoundKind::R,
        BoundKind::E,
        BoundKind::K,
        BoundKind::Ku,
        BoundKind::E2,
        BoundKind::K2,
        BoundKind::R2,
        BoundKind::Ku2,
        BoundKind::CBound,
        BoundKind::CTandem,
        BoundKind::McAllester,
        BoundKind::Catoni,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::R => "R",
            BoundKind::E => "E",
            BoundKind::K => "K",
            BoundKind::Ku => "Ku",
            BoundKind::E2 => "E2",
            BoundKind::K2 => "K2",
            BoundKind::R2 => "R2",
            BoundKind::Ku2 => "Ku2",
            BoundKind::CBound => "cbound",
            BoundKind::CTandem => "ctandem",
            BoundKind::McAllester => "mcallester",
            BoundKind::Catoni => "catoni",
        }
    }

    /// Whether a gradient-based objective exists for this kind.
    pub fn is_optimizable(self) -> bool {
        !matches!(self, BoundKind::McAllester | BoundKind::Catoni)
    }

    /// Whether the bound is only valid for two-class problems.
    pub fn binary_only(self) -> bool {
        matches!(self, BoundKind::R2 | BoundKind::Ku2 | BoundKind::CBound)
    }

    pub fn uses_lambda(self) -> bool {
        matches!(
            self,
            BoundKind::R | BoundKind::E | BoundKind::E2 | BoundKind::R2
        )
    }

    pub fn uses_lambda2(self) -> bool {
        matches!(self, BoundKind::E)
    }

    pub fn uses_gamma(self) -> bool {
        matches!(self, BoundKind::R2)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error from parsing a [`BoundKind`] name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseBoundKindError;

impl fmt::Display for ParseBoundKindError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(
            "unknown bound kind (expected one of: R, E, K, Ku, E2, K2, R2, Ku2, \
             cbound, ctandem, mcallester, catoni)",
        )
    }
}

impl FromStr for BoundKind {
    type Err = ParseBoundKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "r" => BoundKind::R,
            "e" => BoundKind::E,
            "k" => BoundKind::K,
            "ku" => BoundKind::Ku,
            "e2" => BoundKind::E2,
            "k2" => BoundKind::K2,
            "r2" => BoundKind::R2,
            "ku2" => BoundKind::Ku2,
            "cbound" => BoundKind::CBound,
            "ctandem" => BoundKind::CTandem,
            "mcallester" => BoundKind::McAllester,
            "catoni" => BoundKind::Catoni,
            _ => return Err(ParseBoundKindError),
        })
    }
}

impl Serialize for BoundKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for BoundKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct KindVisitor;
        impl serde::de::Visitor<'_> for KindVisitor {
            type Value = BoundKind;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a bound kind name")
            }
            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<BoundKind, E> {
                s.parse().map_err(E::custom)
            }
        }
        deserializer.deserialize_str(KindVisitor)
    }
}

/// How the divergence budget is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    /// Plain KL everywhere.
    Kl,
    /// Rényi divergence with one fixed order `α > 1` shared by every level.
    Fixed(f64),
    /// Rényi divergence with one learnable order per view plus one for the
    /// hyper level, parameterized as `α = 1 + exp(raw)`.
    Learn,
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaMode::Kl => f.write_str("kl"),
            AlphaMode::Fixed(a) => write!(f, "fixed:{a}"),
            AlphaMode::Learn => f.write_str("learn"),
        }
    }
}

/// Error from parsing an [`AlphaMode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseAlphaModeError;

impl fmt::Display for ParseAlphaModeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected `kl`, `learn`, or `fixed:<order>` with order > 1")
    }
}

impl FromStr for AlphaMode {
    type Err = ParseAlphaModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower == "kl" {
            return Ok(AlphaMode::Kl);
        }
        if lower == "learn" {
            return Ok(AlphaMode::Learn);
        }
        let body = lower.strip_prefix("fixed:").unwrap_or(&lower);
        let a: f64 = body.parse().map_err(|_| ParseAlphaModeError)?;
        if a.is_finite() && a > 1.0 {
            Ok(AlphaMode::Fixed(a))
        } else {
            Err(ParseAlphaModeError)
        }
    }
}

/// The divergence order state carried by [`PosteriorParams`]. For
/// [`AlphaMode::Learn`] the raw values are optimized alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaState {
    Kl,
    Fixed(f64),
    Learn { raw_hyper: f64, raw_views: Vec<f64> },
}

impl AlphaState {
    /// Effective order of the hyper-level divergence, if Rényi.
    pub fn alpha_hyper(&self) -> Option<f64> {
        match self {
            AlphaState::Kl => None,
            AlphaState::Fixed(a) => Some(*a),
            AlphaState::Learn { raw_hyper, .. } => Some(1.0 + exp(*raw_hyper)),
        }
    }

    /// Effective per-view orders, if Rényi.
    pub fn alpha_views(&self, n_views: usize) -> Option<Vec<f64>> {
        match self {
            AlphaState::Kl => None,
            AlphaState::Fixed(a) => Some(vec![*a; n_views]),
            AlphaState::Learn { raw_views, .. } => {
                Some(raw_views.iter().map(|&r| 1.0 + exp(r)).collect())
            }
        }
    }
}

/// The priors of the two-level hierarchy: `π` over views and `P_v` over each
/// view's voters. Every weight must be strictly positive so that logits and
/// Rényi divergences exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub pi: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl Priors {
    pub fn new(pi: Vec<f64>, p: Vec<Vec<f64>>) -> Result<Self, BoundError> {
        if pi.is_empty() || pi.len() != p.len() {
            return Err(BoundError::Shape("hyper-prior length must match view count"));
        }
        check_positive_simplex(&pi, "pi")?;
        for pv in &p {
            check_positive_simplex(pv, "P")?;
        }
        Ok(Self { pi, p })
    }

    /// Uniform priors at both levels.
    pub fn uniform(voters_per_view: &[usize]) -> Self {
        let v = voters_per_view.len();
        Self {
            pi: vec![1.0 / v as f64; v],
            p: voters_per_view
                .iter()
                .map(|&k| vec![1.0 / k as f64; k])
                .collect(),
        }
    }

    pub fn n_views(&self) -> usize {
        self.pi.len()
    }
}

fn check_positive_simplex(w: &[f64], what: &'static str) -> Result<(), BoundError> {
    let mut sum = 0.0;
    for &x in w {
        if !(x > 0.0) || !x.is_finite() {
            return Err(BoundError::BadPrior { what });
        }
        sum += x;
    }
    if fabs(sum - 1.0) > SIMPLEX_TOL {
        return Err(BoundError::BadPrior { what });
    }
    Ok(())
}

/// The raw optimization state: softmax logits for both posterior levels plus
/// the scalar knobs. Posteriors are recovered with [`PosteriorParams::rho`]
/// and [`PosteriorParams::q`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub rho_logits: Vec<f64>,
    pub q_logits: Vec<Vec<f64>>,
    /// λ of the primary λ-form term (also the λ of `E`'s joint term).
    pub lambda: f64,
    /// λ of `E`'s disagreement term.
    pub lambda2: f64,
    /// Disagreement-credit slope of `R2`.
    pub gamma: f64,
    pub alpha: AlphaState,
}

impl PosteriorParams {
    /// Start state: posteriors at the priors, every knob at 1, learnable
    /// orders at `α = 2` (`raw = 0`).
    pub fn init(priors: &Priors, mode: AlphaMode) -> Self {
        let v = priors.n_views();
        Self {
            rho_logits: priors.pi.iter().map(|&x| ln(x)).collect(),
            q_logits: priors
                .p
                .iter()
                .map(|pv| pv.iter().map(|&x| ln(x)).collect())
                .collect(),
            lambda: 1.0,
            lambda2: 1.0,
            gamma: 1.0,
            alpha: match mode {
                AlphaMode::Kl => AlphaState::Kl,
                AlphaMode::Fixed(a) => AlphaState::Fixed(a),
                AlphaMode::Learn => AlphaState::Learn {
                    raw_hyper: 0.0,
                    raw_views: vec![0.0; v],
                },
            },
        }
    }

    pub fn n_views(&self) -> usize {
        self.rho_logits.len()
    }

    /// Hyper-posterior over views.
    pub fn rho(&self) -> Vec<f64> {
        softmax(&self.rho_logits)
    }

    /// Per-view posteriors over voters.
    pub fn q(&self) -> Vec<Vec<f64>> {
        self.q_logits.iter().map(|l| softmax(l)).collect()
    }
}

/// Shared evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Confidence level δ ∈ (0, 1]; the certificates hold with probability
    /// 1 − δ.
    pub delta: f64,
    /// Soft-barrier sharpness for the constrained objectives.
    pub barrier: BarrierConfig,
    /// Bisection bracket tolerance for the small-kl inversions.
    pub kl_eps: f64,
    /// Bisection iteration cap.
    pub kl_max_iters: usize,
    /// Slope of the exponential-moment baseline.
    pub catoni_c: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            barrier: BarrierConfig::default(),
            kl_eps: 1e-9,
            kl_max_iters: 1000,
            catoni_c: core::f64::consts::LN_2,
        }
    }
}

/// The three complexity rates every bound draws from. With divergence
/// budget `D`, confidence `δ`, `m` labeled and `n` total samples:
///
/// * `ψ_r = (D + ln(2√m/δ)) / m` — first-order rate;
/// * `ψ_e = (2D + ln(4√m/δ)) / m` — joint-error rate (pairs double `D`);
/// * `ψ_d = (2D + ln(4√n/δ)) / n` — disagreement rate over all `n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiTerms {
    pub psi_r: f64,
    pub psi_e: f64,
    pub psi_d: f64,
    pub delta: f64,
    pub m: usize,
    pub n: usize,
}

/// Builds [`PsiTerms`] from a divergence budget. Negative budgets (rounding
/// noise near `Q = P`) are clipped to zero.
pub fn psi_terms(divergence: f64, delta: f64, m: usize, n: usize) -> Result<PsiTerms, BoundError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundError::BadDelta(delta));
    }
    if m == 0 || n == 0 {
        return Err(BoundError::BadCounts { m, n });
    }
    let d = divergence.max(0.0);
    let mf = m as f64;
    let nf = n as f64;
    Ok(PsiTerms {
        psi_r: (d + ln(2.0 * sqrt(mf) / delta)) / mf,
        psi_e: (2.0 * d + ln(4.0 * sqrt(mf) / delta)) / mf,
        psi_d: (2.0 * d + ln(4.0 * sqrt(nf) / delta)) / nf,
        delta,
        m,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("bound {0} is only defined for binary problems")]
    BinaryOnly(BoundKind),
    #[error("bound {0} has no trainable objective; evaluate it instead")]
    NotOptimizable(BoundKind),
    #[error("Chebyshev denominator is not positive; the tandem bound degenerates here")]
    DegenerateCTandem,
    #[error("lambda must lie strictly inside (0, 2), got {0}")]
    BadLambda(f64),
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("delta must lie in (0, 1], got {0}")]
    BadDelta(f64),
    #[error("the exponential-moment slope must be positive and finite, got {0}")]
    BadCatoni(f64),
    #[error("sample counts must be positive, got m={m}, n={n}")]
    BadCounts { m: usize, n: usize },
    #[error("prior {what} is not a strictly positive probability distribution")]
    BadPrior { what: &'static str },
    #[error("parameter shape mismatch: {0}")]
    Shape(&'static str),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Voter(#[from] VoterError),
}

/// Value and partials of the λ-form transform
/// `Λ(q, ψ, λ) = q/(1−λ/2) + ψ/(λ(1−λ/2))`, as `(Λ, ∂q, ∂ψ, ∂λ)`.
fn lamb_partials(q: f64, psi: f64, lambda: f64) -> (f64, f64, f64, f64) {
    let s = 1.0 - lambda / 2.0;
    let value = q / s + psi / (lambda * s);
    let dq = 1.0 / s;
    let dpsi = 1.0 / (lambda * s);
    let dlambda = q / (2.0 * s * s) + psi * (lambda - 1.0) / ((lambda * s) * (lambda * s));
    (value, dq, dpsi, dlambda)
}

fn check_lambda(l: f64) -> Result<(), BoundError> {
    if l.is_finite() && l > 0.0 && l < 2.0 {
        Ok(())
    } else {
        Err(BoundError::BadLambda(l))
    }
}

fn check_gamma(g: f64) -> Result<(), BoundError> {
    if g.is_finite() && g > 0.0 {
        Ok(())
    } else {
        Err(BoundError::BadGamma(g))
    }
}

fn check_classes(kind: BoundKind, n_classes: usize) -> Result<(), BoundError> {
    if kind.binary_only() && n_classes != 2 {
        return Err(BoundError::BinaryOnly(kind));
    }
    Ok(())
}

/// Gradients of an inverted rate `p = kl⁻¹(q‖ψ)` as `(∂p/∂q, ∂p/∂ψ)`,
/// saturated to finite values at the boundary corners. The vertical-tangent
/// corner `q = 0` maps to `∂p/∂q = 0`: it only occurs when the statistic
/// itself sits at its constrained minimum, where its own gradient vanishes,
/// so the chained product is exactly zero.
fn safe_inv_grads(q: f64, p: f64, mode: InvMode) -> (f64, f64) {
    match mode {
        InvMode::Upper => {
            if p >= 1.0 - 1e-8 || p <= 0.0 {
                return (0.0, 0.0);
            }
            if p <= q {
                return (1.0, 0.0);
            }
            let klp = (p - q) / (p * (1.0 - p));
            let dpsi = 1.0 / klp;
            if q <= 0.0 {
                return (0.0, dpsi);
            }
            let klq = ln(q / p) - ln((1.0 - q) / (1.0 - p));
            (-klq / klp, dpsi)
        }
        InvMode::Lower => {
            if q <= 0.0 || p <= 0.0 {
                return (0.0, 0.0);
            }
            if p >= q {
                return (1.0, 0.0);
            }
            let klp = (p - q) / (p * (1.0 - p));
            let dpsi = 1.0 / klp;
            if q >= 1.0 {
                return (0.0, dpsi);
            }
            let klq = ln(q / p) - ln((1.0 - q) / (1.0 - p));
            (-klq / klp, dpsi)
        }
    }
}

/// Bound value plus the partial derivatives of `objective = bound +
/// barriers` with respect to the six upstream scalars and the knobs.
#[derive(Debug, Clone, Copy, Default)]
struct Partials {
    raw: f64,
    objective: f64,
    d_gibbs: f64,
    d_joint: f64,
    d_dis: f64,
    d_psi_r: f64,
    d_psi_e: f64,
    d_psi_d: f64,
    d_lambda: f64,
    d_lambda2: f64,
    d_gamma: f64,
}

fn bound_partials(
    kind: BoundKind,
    stats: &EmpiricalStats,
    psi: &PsiTerms,
    lambda: f64,
    lambda2: f64,
    gamma: f64,
    cfg: &EvalConfig,
) -> Result<Partials, BoundError> {
    check_classes(kind, stats.n_classes)?;
    let g = stats.gibbs;
    let e = stats.joint;
    let d = stats.disagreement;
    let barrier = &cfg.barrier;
    let up = |q: f64, psi: f64| kl_inv_upper(q, psi, cfg.kl_eps, cfg.kl_max_iters);
    let lo = |q: f64, psi: f64| kl_inv_lower(q, psi, cfg.kl_eps, cfg.kl_max_iters);
    let mut p = Partials::default();

    match kind {
        BoundKind::R => {
            check_lambda(lambda)?;
            let (value, dq, dpsi, dlam) = lamb_partials(g, psi.psi_r, lambda);
            let (b, db) = log_barrier(value - 0.5, barrier);
            let dv = 2.0 + db;
            p.raw = 2.0 * value;
            p.objective = p.raw + b;
            p.d_gibbs = dv * dq;
            p.d_psi_r = dv * dpsi;
            p.d_lambda = dv * dlam;
        }
        BoundKind::E => {
            check_lambda(lambda)?;
            check_lambda(lambda2)?;
            let (le, dq_e, dpsi_e, dlam_e) = lamb_partials(e, psi.psi_e, lambda);
            let (ld, dq_d, dpsi_d, dlam_d) = lamb_partials(d, psi.psi_d, lambda2);
            let (b1, db1) = log_barrier(le - 0.25, barrier);
            // Validity region of the joint/disagreement split:
            // d ≤ 2(√e − e) evaluated on the bound-level quantities.
            let (b2, db2) = log_barrier(ld - 2.0 * (sqrt(le) - le), barrier);
            let dle = 2.0 + db1 + db2 * (2.0 - 1.0 / sqrt(le));
            let dld = 1.0 + db2;
            p.raw = 2.0 * le + ld;
            p.objective = p.raw + b1 + b2;
            p.d_joint = dle * dq_e;
            p.d_psi_e = dle * dpsi_e;
            p.d_lambda = dle * dlam_e;
            p.d_dis = dld * dq_d;
            p.d_psi_d = dld * dpsi_d;
            p.d_lambda2 = dld * dlam_d;
        }
        BoundKind::K => {
            let pv = up(g, psi.psi_r);
            let (b, db) = log_barrier(pv - 0.5, barrier);
            let dv = 2.0 + db;
            let (dq, dpsi) = safe_inv_grads(g, pv, InvMode::Upper);
            p.raw = 2.0 * pv;
            p.objective = p.raw + b;
            p.d_gibbs = dv * dq;
            p.d_psi_r = dv * dpsi;
        }
        BoundKind::Ku => {
            let pe = up(e, psi.psi_e);
            let pd = up(d, psi.psi_d);
            let (b1, db1) = log_barrier(pe - 0.25, barrier);
            let (b2, db2) = log_barrier(pd - 2.0 * (sqrt(pe) - pe), barrier);
            let dpe = 2.0 + db1 + db2 * (2.0 - 1.0 / sqrt(pe));
            let dpd = 1.0 + db2;
            let (dq_e, dpsi_e) = safe_inv_grads(e, pe, InvMode::Upper);
            let (dq_d, dpsi_d) = safe_inv_grads(d, pd, InvMode::Upper);
            p.raw = 2.0 * pe + pd;
            p.objective = p.raw + b1 + b2;
            p.d_joint = dpe * dq_e;
            p.d_psi_e = dpe * dpsi_e;
            p.d_dis = dpd * dq_d;
            p.d_psi_d = dpd * dpsi_d;
        }
        BoundKind::E2 => {
            check_lambda(lambda)?;
            let (le, dq, dpsi, dlam) = lamb_partials(e, psi.psi_e, lambda);
            let (b, db) = log_barrier(le - 0.25, barrier);
            let dv = 4.0 + db;
            p.raw = 4.0 * le;
            p.objective = p.raw + b;
            p.d_joint = dv * dq;
            p.d_psi_e = dv * dpsi;
            p.d_lambda = dv * dlam;
        }
        BoundKind::K2 => {
            let pe = up(e, psi.psi_e);
            let (b, db) = log_barrier(pe - 0.25, barrier);
            let dv = 4.0 + db;
            let (dq, dpsi) = safe_inv_grads(e, pe, InvMode::Upper);
            p.raw = 4.0 * pe;
            p.objective = p.raw + b;
            p.d_joint = dv * dq;
            p.d_psi_e = dv * dpsi;
        }
        BoundKind::R2 => {
            check_lambda(lambda)?;
            check_gamma(gamma)?;
            let (lr, dq, dpsi, dlam) = lamb_partials(g, psi.psi_r, lambda);
            // Disagreement credit: dq = (1 − γ/2)·d̂ − ψ_d/γ.
            let credit = (1.0 - gamma / 2.0) * d - psi.psi_d / gamma;
            let (b1, db1) = log_barrier(lr - 0.5, barrier);
            let (b2, db2) = log_barrier(credit - 0.5, barrier);
            let dlr = 4.0 + db1;
            let dcr = -2.0 + db2;
            p.raw = 4.0 * lr - 2.0 * credit;
            p.objective = p.raw + b1 + b2;
            p.d_gibbs = dlr * dq;
            p.d_psi_r = dlr * dpsi;
            p.d_lambda = dlr * dlam;
            p.d_dis = dcr * (1.0 - gamma / 2.0);
            p.d_psi_d = dcr * (-1.0 / gamma);
            p.d_gamma = dcr * (-d / 2.0 + psi.psi_d / (gamma * gamma));
        }
        BoundKind::Ku2 => {
            let r = up(g, psi.psi_r);
            let dl = lo(d, psi.psi_d);
            let (b1, db1) = log_barrier(r - 0.5, barrier);
            let (b2, db2) = log_barrier(dl - 0.5, barrier);
            let dr = 4.0 + db1;
            let ddl = -2.0 + db2;
            let (dq_r, dpsi_r) = safe_inv_grads(g, r, InvMode::Upper);
            let (dq_d, dpsi_d) = safe_inv_grads(d, dl, InvMode::Lower);
            p.raw = 4.0 * r - 2.0 * dl;
            p.objective = p.raw + b1 + b2;
            p.d_gibbs = dr * dq_r;
            p.d_psi_r = dr * dpsi_r;
            p.d_dis = ddl * dq_d;
            p.d_psi_d = ddl * dpsi_d;
        }
        BoundKind::CBound => {
            let r_raw = up(g, psi.psi_r);
            let dl = lo(d, psi.psi_d).max(0.0);
            let clamped = r_raw > 0.5;
            let r = if clamped { 0.5 } else { r_raw };
            let den = 1.0 - 2.0 * dl;
            let num = (1.0 - 2.0 * r) * (1.0 - 2.0 * r);
            let (raw, d_r_bound, d_dl_bound) = if den <= 0.0 {
                (1.0, 0.0, 0.0)
            } else {
                (
                    1.0 - num / den,
                    if clamped { 0.0 } else { 4.0 * (1.0 - 2.0 * r) / den },
                    -2.0 * num / (den * den),
                )
            };
            // The barrier acts on the unclamped rate so it can pull a
            // saturated trajectory back below ½.
            let (b, db) = log_barrier(r_raw - 0.5, barrier);
            let dr = d_r_bound + db;
            let (dq_r, dpsi_r) = safe_inv_grads(g, r_raw, InvMode::Upper);
            let (dq_d, dpsi_d) = safe_inv_grads(d, dl, InvMode::Lower);
            p.raw = raw;
            p.objective = raw + b;
            p.d_gibbs = dr * dq_r;
            p.d_psi_r = dr * dpsi_r;
            p.d_dis = d_dl_bound * dq_d;
            p.d_psi_d = d_dl_bound * dpsi_d;
        }
        BoundKind::CTandem => {
            let e_up = up(e, psi.psi_e);
            let r_lo = lo(g, psi.psi_r);
            let r_up = up(g, psi.psi_r);
            let den = e_up - r_up + 0.25;
            if den <= 0.0 {
                return Err(BoundError::DegenerateCTandem);
            }
            let num = e_up - r_lo * r_lo;
            let (b1, db1) = log_barrier(r_up - 0.5, barrier);
            let (b2, db2) = log_barrier(e_up - 0.25, barrier);
            let de = (den - num) / (den * den) + db2;
            let dr_lo = -2.0 * r_lo / den;
            let dr_up = num / (den * den) + db1;
            let (dq_e, dpsi_e) = safe_inv_grads(e, e_up, InvMode::Upper);
            let (dq_lo, dpsi_lo) = safe_inv_grads(g, r_lo, InvMode::Lower);
            let (dq_up, dpsi_up) = safe_inv_grads(g, r_up, InvMode::Upper);
            p.raw = num / den;
            p.objective = p.raw + b1 + b2;
            p.d_joint = de * dq_e;
            p.d_psi_e = de * dpsi_e;
            p.d_gibbs = dr_lo * dq_lo + dr_up * dq_up;
            p.d_psi_r = dr_lo * dpsi_lo + dr_up * dpsi_up;
        }
        BoundKind::McAllester | BoundKind::Catoni => {
            return Err(BoundError::NotOptimizable(kind));
        }
    }
    Ok(p)
}

/// Evaluates a bound from precomputed statistics, rates, and divergence
/// budget. This is the low-level entry; [`evaluate`] wires it to a
/// prediction cache. Returns the raw (unclamped) bound value.
#[allow(clippy::too_many_arguments)]
pub fn eval_bound(
    kind: BoundKind,
    stats: &EmpiricalStats,
    psi: &PsiTerms,
    divergence: f64,
    lambda: f64,
    lambda2: f64,
    gamma: f64,
    cfg: &EvalConfig,
) -> Result<f64, BoundError> {
    check_classes(kind, stats.n_classes)?;
    match kind {
        BoundKind::McAllester => Ok(stats.gibbs + sqrt(psi.psi_r / 2.0)),
        BoundKind::Catoni => {
            let c = cfg.catoni_c;
            if !(c.is_finite() && c > 0.0) {
                return Err(BoundError::BadCatoni(c));
            }
            let m = psi.m as f64;
            let inner = c * stats.gibbs + (divergence.max(0.0) + ln(1.0 / psi.delta)) / m;
            Ok((1.0 - exp(-inner)) / (1.0 - exp(-c)))
        }
        _ => Ok(bound_partials(kind, stats, psi, lambda, lambda2, gamma, cfg)?.raw),
    }
}

/// Divergence budget `D = Σ_v ρ_v·D(Q_v‖P_v) + D(ρ‖π)` with gradients in
/// simplex coordinates and (for learnable orders) with respect to each α.
#[derive(Debug, Clone, PartialEq)]
struct DivergenceEval {
    total: f64,
    grad_rho: Vec<f64>,
    grad_q: Vec<Vec<f64>>,
    grad_alpha_hyper: f64,
    grad_alpha_views: Vec<f64>,
}

fn divergence_eval(
    rho: &[f64],
    q: &[Vec<f64>],
    priors: &Priors,
    alpha: &AlphaState,
) -> Result<DivergenceEval, BoundError> {
    let n_views = rho.len();
    let mut total;
    let mut grad_rho = vec![0.0; n_views];
    let mut grad_q = Vec::with_capacity(n_views);
    let mut grad_alpha_views = vec![0.0; n_views];
    let mut grad_alpha_hyper = 0.0;

    match alpha {
        AlphaState::Kl => {
            let (hyper, d_hyper) = kl_categorical_with_grad(rho, &priors.pi)?;
            total = hyper;
            for v in 0..n_views {
                let (dv, dq) = kl_categorical_with_grad(&q[v], &priors.p[v])?;
                total += rho[v] * dv;
                grad_rho[v] = dv + d_hyper[v];
                grad_q.push(dq.iter().map(|&x| rho[v] * x).collect());
            }
        }
        AlphaState::Fixed(_) | AlphaState::Learn { .. } => {
            let a_hyper = alpha.alpha_hyper().expect("Rényi state");
            let a_views = alpha.alpha_views(n_views).expect("Rényi state");
            if a_views.len() != n_views {
                return Err(BoundError::Shape("one learnable order per view required"));
            }
            let hyper = renyi_div_with_grad(rho, &priors.pi, a_hyper)?;
            total = hyper.value;
            grad_alpha_hyper = hyper.d_alpha;
            for v in 0..n_views {
                let rg = renyi_div_with_grad(&q[v], &priors.p[v], a_views[v])?;
                total += rho[v] * rg.value;
                grad_rho[v] = rg.value + hyper.d_q[v];
                grad_q.push(rg.d_q.iter().map(|&x| rho[v] * x).collect());
                grad_alpha_views[v] = rho[v] * rg.d_alpha;
            }
        }
    }
    Ok(DivergenceEval {
        total,
        grad_rho,
        grad_q,
        grad_alpha_hyper,
        grad_alpha_views,
    })
}

/// Total divergence budget for given posteriors — the scalar entering
/// [`psi_terms`].
pub fn total_divergence(
    rho: &[f64],
    q: &[Vec<f64>],
    priors: &Priors,
    alpha: &AlphaState,
) -> Result<f64, BoundError> {
    if rho.len() != priors.n_views() || q.len() != priors.n_views() {
        return Err(BoundError::Shape("posterior/prior view counts differ"));
    }
    Ok(divergence_eval(rho, q, priors, alpha)?.total)
}

/// One certified evaluation: the bound value, its clamped certificate, and
/// everything that went into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Bound value exactly as computed (may exceed 1 or dip below 0 for the
    /// credit-style bounds).
    pub raw: f64,
    /// `raw` clamped to `[0, 4]` — the value the certificate states.
    pub certified: f64,
    pub stats: EmpiricalStats,
    /// Total divergence budget `D`.
    pub divergence: f64,
    pub psi: PsiTerms,
    pub lambda: Option<f64>,
    pub lambda2: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha_hyper: Option<f64>,
    pub alpha_views: Option<Vec<f64>>,
}

fn make_report(
    kind: BoundKind,
    raw: f64,
    stats: EmpiricalStats,
    divergence: f64,
    psi: PsiTerms,
    params: &PosteriorParams,
) -> BoundReport {
    BoundReport {
        kind,
        raw,
        certified: raw.clamp(0.0, 4.0),
        stats,
        divergence,
        psi,
        lambda: kind.uses_lambda().then_some(params.lambda),
        lambda2: kind.uses_lambda2().then_some(params.lambda2),
        gamma: kind.uses_gamma().then_some(params.gamma),
        alpha_hyper: params.alpha.alpha_hyper(),
        alpha_views: params.alpha.alpha_views(params.n_views()),
    }
}

fn check_shapes(
    cache: &PredictionCache,
    priors: &Priors,
    params: &PosteriorParams,
) -> Result<(), BoundError> {
    let v = cache.n_views();
    if priors.n_views() != v {
        return Err(BoundError::Shape("prior view count differs from cache"));
    }
    if params.rho_logits.len() != v || params.q_logits.len() != v {
        return Err(BoundError::Shape("posterior view count differs from cache"));
    }
    for (i, (pl, &k)) in priors.p.iter().zip(cache.voters_per_view()).enumerate() {
        if pl.len() != k || params.q_logits[i].len() != k {
            return Err(BoundError::Shape("voter count differs between prior, posterior, and cache"));
        }
    }
    if let AlphaState::Learn { raw_views, .. } = &params.alpha {
        if raw_views.len() != v {
            return Err(BoundError::Shape("one learnable order per view required"));
        }
    }
    Ok(())
}

/// Full evaluation pipeline: posteriors from logits, empirical statistics,
/// divergence, rates, bound. Works for every [`BoundKind`], including the
/// evaluation-only baselines.
pub fn evaluate(
    kind: BoundKind,
    cache: &PredictionCache,
    labels: &[u16],
    priors: &Priors,
    params: &PosteriorParams,
    cfg: &EvalConfig,
) -> Result<BoundReport, BoundError> {
    check_shapes(cache, priors, params)?;
    let rho = params.rho();
    let q = params.q();
    let stats = empirical_stats(cache, labels, &rho, &q)?;
    check_classes(kind, stats.n_classes)?;
    let div = divergence_eval(&rho, &q, priors, &params.alpha)?;
    let psi = psi_terms(div.total, cfg.delta, stats.m, stats.n)?;
    let raw = eval_bound(
        kind,
        &stats,
        &psi,
        div.total,
        params.lambda,
        params.lambda2,
        params.gamma,
        cfg,
    )?;
    Ok(make_report(kind, raw, stats, div.total, psi, params))
}

/// Gradients of the training objective with respect to every raw parameter.
/// Logit gradients are already pulled back through the softmax; α gradients
/// are with respect to the raw (`α = 1 + exp(raw)`) parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub rho_logits: Vec<f64>,
    pub q_logits: Vec<Vec<f64>>,
    pub lambda: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub alpha_hyper_raw: f64,
    pub alpha_view_raws: Vec<f64>,
}

/// One objective evaluation: barrier-inclusive objective value, the bound
/// report at the current parameters, and the full gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub objective: f64,
    pub report: BoundReport,
    pub grads: ParamGrads,
}

/// Evaluates the constrained training objective (bound + soft barriers) and
/// its exact gradient at `params`. Errors with
/// [`BoundError::NotOptimizable`] for the evaluation-only kinds.
pub fn objective_with_grad(
    kind: BoundKind,
    cache: &PredictionCache,
    labels: &[u16],
    priors: &Priors,
    params: &PosteriorParams,
    cfg: &EvalConfig,
) -> Result<ObjectiveEval, BoundError> {
    if !kind.is_optimizable() {
        return Err(BoundError::NotOptimizable(kind));
    }
    check_shapes(cache, priors, params)?;
    let rho = params.rho();
    let q = params.q();
    let (stats, sg) = empirical_stats_with_grad(cache, labels, &rho, &q)?;
    check_classes(kind, stats.n_classes)?;
    let div = divergence_eval(&rho, &q, priors, &params.alpha)?;
    let psi = psi_terms(div.total, cfg.delta, stats.m, stats.n)?;
    let p = bound_partials(
        kind,
        &stats,
        &psi,
        params.lambda,
        params.lambda2,
        params.gamma,
        cfg,
    )?;

    // Chain through the rates: each ψ is affine in D.
    let mf = stats.m as f64;
    let nf = stats.n as f64;
    let d_div = p.d_psi_r / mf + 2.0 * p.d_psi_e / mf + 2.0 * p.d_psi_d / nf;

    let n_views = cache.n_views();
    let mut grad_rho_s = vec![0.0; n_views];
    for v in 0..n_views {
        grad_rho_s[v] = p.d_gibbs * sg.d_gibbs_rho[v]
            + p.d_joint * sg.d_joint_rho[v]
            + p.d_dis * sg.d_dis_rho[v]
            + d_div * div.grad_rho[v];
    }
    let mut grad_q_s: Vec<Vec<f64>> = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let mut gq = vec![0.0; q[v].len()];
        for h in 0..q[v].len() {
            gq[h] = p.d_gibbs * sg.d_gibbs_q[v][h]
                + p.d_joint * sg.d_joint_q[v][h]
                + p.d_dis * sg.d_dis_q[v][h]
                + d_div * div.grad_q[v][h];
        }
        grad_q_s.push(gq);
    }

    let mut grads = ParamGrads {
        rho_logits: softmax_pullback(&rho, &grad_rho_s),
        q_logits: q
            .iter()
            .zip(&grad_q_s)
            .map(|(qv, gs)| softmax_pullback(qv, gs))
            .collect(),
        lambda: p.d_lambda,
        lambda2: p.d_lambda2,
        gamma: p.d_gamma,
        alpha_hyper_raw: 0.0,
        alpha_view_raws: vec![0.0; n_views],
    };
    if let AlphaState::Learn {
        raw_hyper,
        raw_views,
    } = &params.alpha
    {
        grads.alpha_hyper_raw = d_div * div.grad_alpha_hyper * exp(*raw_hyper);
        for v in 0..n_views {
            grads.alpha_view_raws[v] = d_div * div.grad_alpha_views[v] * exp(raw_views[v]);
        }
    }

    let report = make_report(kind, p.raw, stats, div.total, psi, params);
    Ok(ObjectiveEval {
        objective: p.objective,
        report,
        grads,
    })
}
