//! Divergence kernels and their inverses.
//!
//! Everything the bound family needs from information theory lives here:
//! binary and categorical KL, Rényi divergences of order `α > 1` with
//! gradients in the distribution and in `α`, the upper/lower inversions of
//! binary KL by bisection together with their implicit-function-theorem
//! gradients, and the relaxed logarithmic barrier used to keep constrained
//! objectives differentiable everywhere.

use alloc::vec::Vec;
use thiserror::Error;

use crate::numeric::{exp, fabs, ln, log_sum_exp, KahanSum};

/// Tolerance when validating that a vector lies on the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivergenceError {
    #[error("probability vectors must have the same nonzero length (got {0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("entry {index} = {value} is not a probability")]
    NotProbability { index: usize, value: f64 },
    #[error("vector sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("absolute continuity violated at index {0} (reference mass is 0)")]
    NotAbsolutelyContinuous(usize),
    #[error("Renyi order must be finite and > 1 (got {0})")]
    BadOrder(f64),
    #[error("binary KL reference must lie strictly inside (0, 1) (got {0})")]
    BoundaryReference(f64),
    #[error("empirical rate must lie in [0, 1] (got {0})")]
    BadRate(f64),
    #[error("inversion gradient needs p strictly inside (0, 1) (got {0})")]
    BoundaryInversion(f64),
}

fn check_simplex(v: &[f64]) -> Result<(), DivergenceError> {
    let mut sum = KahanSum::new();
    for (i, &x) in v.iter().enumerate() {
        if !(0.0..=1.0 + SIMPLEX_TOL).contains(&x) || x.is_nan() {
            return Err(DivergenceError::NotProbability { index: i, value: x });
        }
        sum.add(x);
    }
    let s = sum.value();
    if fabs(s - 1.0) > SIMPLEX_TOL {
        return Err(DivergenceError::NotNormalized(s));
    }
    Ok(())
}

fn check_pair(q: &[f64], p: &[f64]) -> Result<(), DivergenceError> {
    if q.is_empty() || q.len() != p.len() {
        return Err(DivergenceError::LengthMismatch(q.len(), p.len()));
    }
    check_simplex(q)?;
    check_simplex(p)
}

/// `x ln(x/y)` with the `0 ln 0 = 0` convention.
#[inline]
fn xlnxy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln(x / y)
    }
}

/// Binary KL divergence `kl(q ‖ p)` between Bernoulli parameters.
///
/// `q` may sit on the boundary of `[0, 1]`; the reference `p` must be
/// strictly interior.
pub fn kl_binary(q: f64, p: f64) -> Result<f64, DivergenceError> {
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(DivergenceError::BadRate(q));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(DivergenceError::BoundaryReference(p));
    }
    Ok(xlnxy(q, p) + xlnxy(1.0 - q, 1.0 - p))
}

/// Same as [`kl_binary`] but without input validation; callers guarantee
/// `q ∈ [0, 1]` and `p ∈ (0, 1)`.
#[inline]
fn kl_binary_unchecked(q: f64, p: f64) -> f64 {
    xlnxy(q, p) + xlnxy(1.0 - q, 1.0 - p)
}

/// Categorical KL divergence `KL(Q ‖ P)`.
pub fn kl_categorical(q: &[f64], p: &[f64]) -> Result<f64, DivergenceError> {
    check_pair(q, p)?;
    let mut acc = KahanSum::new();
    for (i, (&qh, &ph)) in q.iter().zip(p).enumerate() {
        if qh > 0.0 {
            if ph == 0.0 {
                return Err(DivergenceError::NotAbsolutelyContinuous(i));
            }
            acc.add(qh * ln(qh / ph));
        }
    }
    Ok(acc.value())
}

/// Categorical KL with its gradient in `Q`. Entries with `q_h = 0` get a
/// zero gradient (the one-sided derivative of `q ln q` is unbounded there,
/// but softmax-parameterized posteriors never reach the boundary).
pub fn kl_categorical_with_grad(
    q: &[f64],
    p: &[f64],
) -> Result<(f64, Vec<f64>), DivergenceError> {
    let value = kl_categorical(q, p)?;
    let grad = q
        .iter()
        .zip(p)
        .map(|(&qh, &ph)| if qh > 0.0 { ln(qh / ph) + 1.0 } else { 0.0 })
        .collect();
    Ok((value, grad))
}

/// Rényi divergence `D_α(Q ‖ P) = ln(Σ_h q_h^α p_h^{1−α}) / (α − 1)` for
/// `α > 1`, computed in log space for stability at large orders.
pub fn renyi_div(q: &[f64], p: &[f64], alpha: f64) -> Result<f64, DivergenceError> {
    Ok(renyi_div_with_grad(q, p, alpha)?.value)
}

/// Rényi divergence together with its gradient in `Q` and in `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenyiGrad {
    pub value: f64,
    /// `∂D_α/∂q_h` (zero at entries with `q_h = 0`).
    pub d_q: Vec<f64>,
    /// `∂D_α/∂α`.
    pub d_alpha: f64,
}

pub fn renyi_div_with_grad(
    q: &[f64],
    p: &[f64],
    alpha: f64,
) -> Result<RenyiGrad, DivergenceError> {
    check_pair(q, p)?;
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(DivergenceError::BadOrder(alpha));
    }
    // Support of Q, in log space: t_h = α ln q_h + (1 − α) ln p_h.
    let mut support = Vec::with_capacity(q.len());
    let mut ts = Vec::with_capacity(q.len());
    for (i, (&qh, &ph)) in q.iter().zip(p).enumerate() {
        if qh > 0.0 {
            if ph == 0.0 {
                return Err(DivergenceError::NotAbsolutelyContinuous(i));
            }
            support.push(i);
            ts.push(alpha * ln(qh) + (1.0 - alpha) * ln(ph));
        }
    }
    let ln_s = log_sum_exp(&ts);
    let value = ln_s / (alpha - 1.0);

    // Normalized weights w_h = exp(t_h − ln S) form the escort distribution;
    // ∂lnS/∂q_h = w_h α / q_h and ∂lnS/∂α = Σ w_h ln(q_h / p_h).
    let mut d_q = alloc::vec![0.0; q.len()];
    let mut dlns_dalpha = KahanSum::new();
    for (&i, &t) in support.iter().zip(&ts) {
        let w = exp(t - ln_s);
        d_q[i] = w * alpha / (q[i] * (alpha - 1.0));
        dlns_dalpha.add(w * ln(q[i] / p[i]));
    }
    let d_alpha = -ln_s / ((alpha - 1.0) * (alpha - 1.0))
        + dlns_dalpha.value() / (alpha - 1.0);
    Ok(RenyiGrad { value, d_q, d_alpha })
}

/// Which branch of the binary-KL inversion is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvMode {
    /// Largest `p ≥ q` with `kl(q ‖ p) ≤ ψ`.
    Upper,
    /// Smallest `p ≤ q` with `kl(q ‖ p) ≤ ψ`.
    Lower,
}

/// Upper inversion of binary KL by bisection on `[q, 1]`: returns the
/// largest `p` with `kl(q ‖ p) ≤ psi`, to interval tolerance `eps` within at
/// most `max_iters` halvings. The result saturates at `1 − 10·eps` when the
/// budget exceeds what is numerically representable.
pub fn kl_inv_upper(q: f64, psi: f64, eps: f64, max_iters: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    debug_assert!(eps > 0.0);
    let psi = psi.max(0.0);
    let (mut lo, mut hi) = (q, 1.0);
    let mut p = 0.5 * (lo + hi);
    for _ in 0..max_iters {
        p = 0.5 * (lo + hi);
        if hi - lo < eps {
            break;
        }
        if kl_binary_unchecked(q, p) > psi {
            hi = p;
        } else {
            lo = p;
        }
    }
    p.min(1.0 - 10.0 * eps).max(q)
}

/// Lower inversion of binary KL by bisection on `[0, q]`: returns the
/// smallest `p` with `kl(q ‖ p) ≤ psi`.
pub fn kl_inv_lower(q: f64, psi: f64, eps: f64, max_iters: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    debug_assert!(eps > 0.0);
    let psi = psi.max(0.0);
    if q == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, q);
    let mut p = 0.5 * (lo + hi);
    for _ in 0..max_iters {
        p = 0.5 * (lo + hi);
        if hi - lo < eps {
            break;
        }
        if kl_binary_unchecked(q, p) > psi {
            lo = p;
        } else {
            hi = p;
        }
    }
    p.min(q)
}

/// Gradient of the KL inversion `p(q, ψ)` via the implicit function theorem
/// applied to `kl(q ‖ p) = ψ`:
///
/// ```text
/// dp/dψ = 1 / (∂kl/∂p),           ∂kl/∂p = (p − q) / (p (1 − p))
/// dp/dq = −(∂kl/∂q) / (∂kl/∂p),   ∂kl/∂q = ln(q/p) − ln((1−q)/(1−p))
/// ```
///
/// Requires `p` strictly inside `(0, 1)`. At the degenerate point `p = q`
/// (ψ = 0) the defined one-sided limits are returned: `dp/dq = 1` and
/// `dp/dψ = ±∞` with the sign of the branch.
pub fn kl_inv_grad(
    q: f64,
    _psi: f64,
    p: f64,
    mode: InvMode,
) -> Result<(f64, f64), DivergenceError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DivergenceError::BoundaryInversion(p));
    }
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(DivergenceError::BadRate(q));
    }
    if p == q {
        let inf = match mode {
            InvMode::Upper => f64::INFINITY,
            InvMode::Lower => f64::NEG_INFINITY,
        };
        return Ok((1.0, inf));
    }
    let dkl_dp = (p - q) / (p * (1.0 - p));
    // ln(q/p) − ln((1−q)/(1−p)); the q ∈ {0, 1} boundaries give the correct
    // infinite one-sided derivative.
    let dkl_dq = if q == 0.0 {
        f64::NEG_INFINITY
    } else if q == 1.0 {
        f64::INFINITY
    } else {
        ln(q / p) - ln((1.0 - q) / (1.0 - p))
    };
    Ok((-dkl_dq / dkl_dp, 1.0 / dkl_dp))
}

/// Order parameter for a Rényi divergence, stored as `raw` with
/// `α = 1 + exp(raw)` so that any real `raw` maps to a valid order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaParam {
    pub raw: f64,
}

impl AlphaParam {
    pub fn alpha(&self) -> f64 {
        1.0 + exp(self.raw)
    }

    /// `dα/draw = exp(raw)`.
    pub fn dalpha_draw(&self) -> f64 {
        exp(self.raw)
    }

    pub fn from_alpha(alpha: f64) -> Result<Self, DivergenceError> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(DivergenceError::BadOrder(alpha));
        }
        Ok(Self { raw: ln(alpha - 1.0) })
    }
}

/// Configuration of the relaxed logarithmic barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    /// Sharpness `t`; larger values track the hard constraint more closely.
    pub t: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self { t: 100.0 }
    }
}

/// Relaxed log-barrier for the constraint `a ≤ 0`:
///
/// ```text
/// B_t(a) = −(1/t) ln(−a)                 if a ≤ −1/t²
///        = t·a − (1/t) ln(1/t²) + 1/t    otherwise
/// ```
///
/// Returns `(value, derivative)`. The two branches meet with matching value
/// and slope at `a = −1/t²`, so the barrier is differentiable everywhere and
/// finite even at infeasible points.
pub fn log_barrier(a: f64, cfg: &BarrierConfig) -> (f64, f64) {
    let t = cfg.t;
    debug_assert!(t > 0.0);
    let knot = -1.0 / (t * t);
    if a <= knot {
        (-ln(-a) / t, -1.0 / (t * a))
    } else {
        (t * a - ln(1.0 / (t * t)) / t + 1.0 / t, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::kahan_sum;
    use approx::assert_abs_diff_eq;

    const EPS: f64 = 1e-9;
    const ITERS: usize = 1000;

    #[test]
    fn kl_binary_frozen_values() {
        // kl(0 ‖ 1/2) = ln 2.
        assert_abs_diff_eq!(
            kl_binary(0.0, 0.5).unwrap(),
            core::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // kl(0.1 ‖ 0.2) = 0.1 ln(1/2) + 0.9 ln(9/8).
        assert_abs_diff_eq!(
            kl_binary(0.1, 0.2).unwrap(),
            0.036690014034750584,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(kl_binary(0.3, 0.3).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kl_binary_rejects_boundary_reference() {
        assert!(matches!(
            kl_binary(0.2, 0.0),
            Err(DivergenceError::BoundaryReference(_))
        ));
        assert!(matches!(
            kl_binary(0.2, 1.0),
            Err(DivergenceError::BoundaryReference(_))
        ));
    }

    #[test]
    fn kl_categorical_frozen_value() {
        // KL((0.8, 0.2) ‖ (0.5, 0.5)) = 0.8 ln 1.6 + 0.2 ln 0.4.
        assert_abs_diff_eq!(
            kl_categorical(&[0.8, 0.2], &[0.5, 0.5]).unwrap(),
            0.19274475702175742,
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_categorical_needs_absolute_continuity() {
        assert!(matches!(
            kl_categorical(&[0.5, 0.5], &[1.0, 0.0]),
            Err(DivergenceError::NotAbsolutelyContinuous(1))
        ));
        // A shared zero is fine.
        assert_abs_diff_eq!(
            kl_categorical(&[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn renyi_frozen_value_at_order_two() {
        // D_2((0.8, 0.2) ‖ (0.5, 0.5)) = ln(0.5·1.6² + 0.5·0.4²) = ln 1.36.
        assert_abs_diff_eq!(
            renyi_div(&[0.8, 0.2], &[0.5, 0.5], 2.0).unwrap(),
            1.36f64.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn renyi_approaches_kl_from_above() {
        let q = [0.7, 0.1, 0.2];
        let p = [0.3, 0.4, 0.3];
        let kl = kl_categorical(&q, &p).unwrap();
        let near_one = renyi_div(&q, &p, 1.0 + 1e-6).unwrap();
        assert_abs_diff_eq!(near_one, kl, epsilon = 1e-4);
        assert!(near_one >= kl - 1e-12);
        // Monotone in the order.
        let d2 = renyi_div(&q, &p, 2.0).unwrap();
        let d3 = renyi_div(&q, &p, 3.0).unwrap();
        assert!(d3 >= d2 && d2 >= kl);
    }

    #[test]
    fn renyi_product_identity() {
        let q = [0.8, 0.2];
        let p = [0.5, 0.5];
        // Outer product Q⊗Q against P⊗P doubles the divergence.
        let qq = [0.64, 0.16, 0.16, 0.04];
        let pp = [0.25, 0.25, 0.25, 0.25];
        let one = renyi_div(&q, &p, 1.7).unwrap();
        let two = renyi_div(&qq, &pp, 1.7).unwrap();
        assert_abs_diff_eq!(two, 2.0 * one, epsilon = 1e-12);
    }

    #[test]
    fn renyi_gradients_match_finite_differences() {
        let q = [0.6, 0.3, 0.1];
        let p = [0.2, 0.5, 0.3];
        let alpha = 1.8;
        let g = renyi_div_with_grad(&q, &p, alpha).unwrap();
        let h = 1e-7;
        // α direction.
        let up = renyi_div(&q, &p, alpha + h).unwrap();
        let dn = renyi_div(&q, &p, alpha - h).unwrap();
        assert_abs_diff_eq!(g.d_alpha, (up - dn) / (2.0 * h), epsilon = 1e-6);
        // Coordinate directions (off-simplex perturbation; the partial
        // derivatives are defined on the positive orthant).
        for i in 0..3 {
            let mut qu = q;
            let mut qd = q;
            qu[i] += h;
            qd[i] -= h;
            // Bypass the simplex check by renormalizing manually: compare
            // against the raw formula instead.
            let raw = |qv: &[f64; 3]| {
                let s: f64 = qv
                    .iter()
                    .zip(&p)
                    .map(|(&a, &b)| libm::pow(a, alpha) * libm::pow(b, 1.0 - alpha))
                    .sum();
                s.ln() / (alpha - 1.0)
            };
            let fd = (raw(&qu) - raw(&qd)) / (2.0 * h);
            assert_abs_diff_eq!(g.d_q[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn inversion_recovers_closed_forms() {
        // kl(0 ‖ p) = −ln(1−p), so the upper inverse at q = 0 is 1 − e^{−ψ}.
        let p = kl_inv_upper(0.0, core::f64::consts::LN_2, EPS, ITERS);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-9);
        // kl(1 ‖ p) = −ln p, so the lower inverse at q = 1 is e^{−ψ}.
        let p = kl_inv_lower(1.0, core::f64::consts::LN_2, EPS, ITERS);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn inversion_matches_frozen_value() {
        let p = kl_inv_upper(0.1, 0.2, EPS, ITERS);
        assert_abs_diff_eq!(p, 0.378391, epsilon = 1e-5);
        assert_abs_diff_eq!(kl_binary(0.1, p).unwrap(), 0.2, epsilon = 1e-6);
    }

    #[test]
    fn inversion_with_zero_budget_returns_q() {
        assert_abs_diff_eq!(kl_inv_upper(0.3, 0.0, EPS, ITERS), 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(kl_inv_lower(0.3, 0.0, EPS, ITERS), 0.3, epsilon = 1e-8);
    }

    #[test]
    fn inversion_round_trip() {
        for &(q, p) in &[(0.05, 0.3), (0.2, 0.6), (0.4, 0.9)] {
            let psi = kl_binary(q, p).unwrap();
            assert_abs_diff_eq!(kl_inv_upper(q, psi, EPS, ITERS), p, epsilon = 1e-8);
        }
        for &(q, p) in &[(0.3, 0.05), (0.6, 0.2), (0.9, 0.4)] {
            let psi = kl_binary(q, p).unwrap();
            assert_abs_diff_eq!(kl_inv_lower(q, psi, EPS, ITERS), p, epsilon = 1e-8);
        }
    }

    #[test]
    fn inversion_monotone_in_budget_and_rate() {
        let mut prev = 0.0;
        for k in 1..=20 {
            let p = kl_inv_upper(0.1, 0.05 * k as f64, EPS, ITERS);
            assert!(p >= prev - 1e-12);
            prev = p;
        }
        let mut prev = 0.0;
        for k in 1..=9 {
            let p = kl_inv_upper(0.1 * k as f64, 0.1, EPS, ITERS);
            assert!(p >= prev - 1e-12);
            prev = p;
        }
    }

    #[test]
    fn inversion_gradient_matches_finite_differences() {
        let (q, psi) = (0.1, 0.2);
        let p = kl_inv_upper(q, psi, 1e-13, ITERS);
        let (dp_dq, dp_dpsi) = kl_inv_grad(q, psi, p, InvMode::Upper).unwrap();
        let h = 1e-6;
        let fd_psi = (kl_inv_upper(q, psi + h, 1e-13, ITERS)
            - kl_inv_upper(q, psi - h, 1e-13, ITERS))
            / (2.0 * h);
        let fd_q = (kl_inv_upper(q + h, psi, 1e-13, ITERS)
            - kl_inv_upper(q - h, psi, 1e-13, ITERS))
            / (2.0 * h);
        assert_abs_diff_eq!(dp_dpsi, fd_psi, epsilon = 1e-4);
        assert_abs_diff_eq!(dp_dq, fd_q, epsilon = 1e-4);
        // Frozen check: dp/dψ = p(1−p)/(p−q) at the solved point.
        assert_abs_diff_eq!(
            dp_dpsi,
            p * (1.0 - p) / (p - q),
            epsilon = 1e-9
        );
    }

    #[test]
    fn inversion_gradient_near_zero_rate_matches_finite_differences() {
        // The slope in q diverges at q = 0; at q = 1e−6 the analytic formula
        // must still track finite differences.
        let (q, psi) = (1e-6, 0.2);
        let p = kl_inv_upper(q, psi, 1e-13, ITERS);
        let (dp_dq, _) = kl_inv_grad(q, psi, p, InvMode::Upper).unwrap();
        let h = 1e-8;
        let fd_q = (kl_inv_upper(q + h, psi, 1e-13, ITERS)
            - kl_inv_upper(q - h, psi, 1e-13, ITERS))
            / (2.0 * h);
        assert_abs_diff_eq!(dp_dq / fd_q, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn barrier_frozen_values() {
        let cfg = BarrierConfig::default();
        let (v, d) = log_barrier(-1.0, &cfg);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.01, epsilon = 1e-15);
        // At a = 0 the linear branch gives (2 ln t)/t + 1/t = 0.1021034…
        let (v, _) = log_barrier(0.0, &cfg);
        assert_abs_diff_eq!(v, 0.10210340371976183, epsilon = 1e-14);
    }

    #[test]
    fn barrier_is_c1_at_the_knot() {
        let cfg = BarrierConfig { t: 100.0 };
        let knot = -1e-4;
        let (v_left, d_left) = log_barrier(knot, &cfg);
        let (v_right, d_right) = log_barrier(knot + 1e-12, &cfg);
        assert_abs_diff_eq!(v_left, v_right, epsilon = 1e-9);
        assert_abs_diff_eq!(d_left, d_right, epsilon = 1e-6);
        assert_abs_diff_eq!(d_left, 100.0, epsilon = 1e-9);
        // Value at the knot is (2 ln t)/t.
        assert_abs_diff_eq!(v_left, 2.0 * 100f64.ln() / 100.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha_param_round_trips() {
        let a = AlphaParam::from_alpha(1.1).unwrap();
        assert_abs_diff_eq!(a.alpha(), 1.1, epsilon = 1e-12);
        assert!(AlphaParam::from_alpha(1.0).is_err());
        let b = AlphaParam { raw: 0.0 };
        assert_abs_diff_eq!(b.alpha(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.dalpha_draw(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn simplex_validation_rejects_bad_input() {
        assert!(kl_categorical(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_categorical(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        assert!(kl_categorical(&[0.5, 0.5], &[0.5]).is_err());
        assert!(renyi_div(&[0.5, 0.5], &[0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn kahan_sum_helper_is_used_consistently() {
        // Guard against accidental regressions in the shared helper.
        let xs = [1e16, 1.0, -1e16];
        assert_abs_diff_eq!(kahan_sum(xs.iter().copied()), 1.0, epsilon = 1e-6);
    }
}
