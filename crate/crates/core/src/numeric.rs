//! Shared numeric helpers: `libm`-backed float math, compensated summation,
//! and simplex/logit transforms.

use alloc::vec::Vec;

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn fabs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Neumaier-compensated accumulator. Keeps long reductions accurate enough
/// that the result is independent of summation order to well below 1e-12.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if fabs(self.sum) >= fabs(x) {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of terms.
pub fn kahan_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// `ln Σ exp(x_i)`, stabilized by the usual max shift. Empty input is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(exp(x - max));
    }
    max + ln(acc.value())
}

/// Softmax of a logit slice into a fresh probability vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| exp(z - lse)).collect()
}

/// Pulls a gradient with respect to simplex weights `w = softmax(z)` back to
/// the logits `z`: `g_k = w_k (df/dw_k − Σ_j w_j df/dw_j)`.
pub fn softmax_pullback(weights: &[f64], grad_weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(weights.len(), grad_weights.len());
    let mut inner = KahanSum::new();
    for (w, g) in weights.iter().zip(grad_weights) {
        inner.add(w * g);
    }
    let inner = inner.value();
    weights
        .iter()
        .zip(grad_weights)
        .map(|(&w, &g)| w * (g - inner))
        .collect()
}

/// Index of the largest entry, ties resolved to the lowest index.
pub fn argmax_tie_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Smallest `k` with `k * k >= d` (exact integer ceil of sqrt).
pub fn ceil_sqrt(d: usize) -> usize {
    let mut k = 0usize;
    while k * k < d {
        k += 1;
    }
    k
}
