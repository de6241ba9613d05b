//! Brute-force oracles for the empirical statistics.
//!
//! [`crate::risks`] computes `ĝ`, `ê`, `d̂` through the aggregated vote
//! mass. This module recomputes them straight from the definitions —
//! expectations over voters drawn from the two-level mixture, enumerating
//! every voter (and every voter pair for the second-order statistics) — so
//! the two paths share no code and can cross-check each other. The pair
//! enumeration is quadratic in the voter count, hence the hard caps.

use alloc::vec::Vec;
use thiserror::Error;

use crate::risks::{mv_risk_on, EmpiricalStats};
use crate::voters::{check_weights, PredictionCache, VoterError};

/// Largest Σ_v |voters| the quadratic pair enumeration accepts.
pub const MAX_ORACLE_VOTERS: usize = 64;
/// Largest sample block the oracle accepts.
pub const MAX_ORACLE_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle caps at {MAX_ORACLE_VOTERS} voters, got {0}")]
    TooManyVoters(usize),
    #[error("oracle caps at {MAX_ORACLE_SAMPLES} samples, got {0}")]
    TooManySamples(usize),
    #[error(transparent)]
    Voter(#[from] VoterError),
}

/// Flattened voter list: (view, voter, mixture weight ρ_v·Q_v[h]).
fn flatten(
    cache: &PredictionCache,
    rho: &[f64],
    q: &[Vec<f64>],
) -> Result<Vec<(usize, usize, f64)>, OracleError> {
    check_weights(cache, rho, q)?;
    let total: usize = cache.voters_per_view().iter().sum();
    if total > MAX_ORACLE_VOTERS {
        return Err(OracleError::TooManyVoters(total));
    }
    let mut out = Vec::with_capacity(total);
    for (v, qv) in q.iter().enumerate() {
        for (h, &w) in qv.iter().enumerate() {
            out.push((v, h, rho[v] * w));
        }
    }
    Ok(out)
}

/// Recomputes [`EmpiricalStats`] by enumerating voters and voter pairs:
///
/// * `ĝ  = Σ_a w_a · mean_i 1[pred_a(i) ≠ y_i]`
/// * `ê  = Σ_a Σ_b w_a w_b · mean_i 1[pred_a(i) ≠ y_i]·1[pred_b(i) ≠ y_i]`
/// * `d̂ = Σ_a Σ_b w_a w_b · mean_i 1[pred_a(i) ≠ pred_b(i)]`
///
/// over the same labeled / labeled∪unlabeled blocks as the production path.
pub fn brute_stats(
    cache: &PredictionCache,
    labels: &[u16],
    rho: &[f64],
    q: &[Vec<f64>],
) -> Result<EmpiricalStats, OracleError> {
    let voters = flatten(cache, rho, q)?;
    let m = cache.n_labeled();
    let n = cache.disagreement_range().len();
    if n > MAX_ORACLE_SAMPLES {
        return Err(OracleError::TooManySamples(n));
    }
    if labels.len() != m {
        return Err(VoterError::LabelCount {
            got: labels.len(),
            expected: m,
        }
        .into());
    }

    let mut gibbs = 0.0;
    for &(v, h, w) in &voters {
        let wrong = (0..m)
            .filter(|&i| cache.pred(v, h, i) != labels[i])
            .count();
        gibbs += w * wrong as f64 / m as f64;
    }

    let mut joint = 0.0;
    let mut dis = 0.0;
    for &(va, ha, wa) in &voters {
        for &(vb, hb, wb) in &voters {
            let pair = wa * wb;
            if pair == 0.0 {
                continue;
            }
            let mut both_wrong = 0usize;
            let mut differ = 0usize;
            for i in 0..n {
                let a = cache.pred(va, ha, i);
                let b = cache.pred(vb, hb, i);
                if i < m && a != labels[i] && b != labels[i] {
                    both_wrong += 1;
                }
                if a != b {
                    differ += 1;
                }
            }
            joint += pair * both_wrong as f64 / m as f64;
            dis += pair * differ as f64 / n as f64;
        }
    }

    Ok(EmpiricalStats {
        gibbs,
        joint,
        disagreement: dis,
        m,
        n,
        n_classes: cache.n_classes(),
    })
}

/// Slack of the classical vote inequalities on the labeled block. Every
/// field is `bound − mv_risk` and must be ≥ 0 (up to rounding) for any
/// valid weighting; tests use this as a sanity oracle on the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteInequalities {
    pub mv_risk: f64,
    /// `2ĝ − mv`: first-order (Markov) factor-two slack.
    pub first_order: f64,
    /// `4ê − mv`: second-order (pair Markov) factor-four slack.
    pub second_order: f64,
    /// `1 − (1−2ĝ)²/(1−2d̂) − mv`: Cantelli slack. Only defined for binary
    /// problems with `ĝ < ½` and `d̂ < ½`, with `d̂` over the labeled block.
    pub cantelli: Option<f64>,
}

/// Evaluates the vote inequalities on the labeled block (the disagreement
/// here is restricted to labeled samples so all quantities share one
/// distribution).
pub fn oracle_inequalities(
    cache: &PredictionCache,
    labels: &[u16],
    rho: &[f64],
    q: &[Vec<f64>],
) -> Result<VoteInequalities, OracleError> {
    let voters = flatten(cache, rho, q)?;
    let m = cache.n_labeled();
    if m > MAX_ORACLE_SAMPLES {
        return Err(OracleError::TooManySamples(m));
    }
    if labels.len() != m {
        return Err(VoterError::LabelCount {
            got: labels.len(),
            expected: m,
        }
        .into());
    }
    let mv = mv_risk_on(cache, labels, rho, q, cache.labeled_range())?;

    let mut gibbs = 0.0;
    for &(v, h, w) in &voters {
        let wrong = (0..m)
            .filter(|&i| cache.pred(v, h, i) != labels[i])
            .count();
        gibbs += w * wrong as f64 / m as f64;
    }
    let mut joint = 0.0;
    let mut dis = 0.0;
    for &(va, ha, wa) in &voters {
        for &(vb, hb, wb) in &voters {
            let pair = wa * wb;
            let mut both_wrong = 0usize;
            let mut differ = 0usize;
            for i in 0..m {
                let a = cache.pred(va, ha, i);
                let b = cache.pred(vb, hb, i);
                if a != labels[i] && b != labels[i] {
                    both_wrong += 1;
                }
                if a != b {
                    differ += 1;
                }
            }
            joint += pair * both_wrong as f64 / m as f64;
            dis += pair * differ as f64 / m as f64;
        }
    }

    let cantelli = if cache.n_classes() == 2 && gibbs < 0.5 && dis < 0.5 {
        let num = (1.0 - 2.0 * gibbs) * (1.0 - 2.0 * gibbs);
        Some(1.0 - num / (1.0 - 2.0 * dis) - mv)
    } else {
        None
    };
    Ok(VoteInequalities {
        mv_risk: mv,
        first_order: 2.0 * gibbs - mv,
        second_order: 4.0 * joint - mv,
        cantelli,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::risks::empirical_stats;
    use crate::voters::{predict_cache, train_forest, TreeConfig};
    use approx::assert_abs_diff_eq;

    fn forests_cache() -> (PredictionCache, Vec<u16>) {
        let x = Matrix::new(
            10,
            2,
            vec![
                0.1, 1.0, 0.4, 0.2, 0.9, 0.8, 1.3, 0.1, 1.8, 0.9, 2.2, 0.3, 2.6, 1.1, 3.0, 0.2,
                3.4, 1.2, 3.9, 0.5,
            ],
        );
        let y = vec![0, 0, 0, 0, 1, 1, 1, 0, 1, 1];
        let unlabeled = Matrix::new(2, 2, vec![1.5, 0.5, 2.9, 0.9]);
        let mut ensembles = Vec::new();
        for view in 0..2 {
            ensembles.push(
                train_forest(
                    &x,
                    &y,
                    2,
                    view,
                    &TreeConfig {
                        n_trees: 6,
                        max_depth: 2,
                        seed: 21,
                    },
                )
                .unwrap(),
            );
        }
        let views = [x.clone(), x];
        let unl = [unlabeled.clone(), unlabeled];
        let cache = predict_cache(&ensembles, &views, Some(&unl), None).unwrap();
        (cache, y)
    }

    #[test]
    fn brute_force_agrees_with_the_mass_based_statistics() {
        let (cache, y) = forests_cache();
        let rho = vec![0.35, 0.65];
        let q: Vec<Vec<f64>> = vec![
            vec![0.1, 0.3, 0.2, 0.15, 0.15, 0.1],
            vec![0.25, 0.05, 0.2, 0.2, 0.1, 0.2],
        ];
        let fast = empirical_stats(&cache, &y, &rho, &q).unwrap();
        let slow = brute_stats(&cache, &y, &rho, &q).unwrap();
        assert_abs_diff_eq!(fast.gibbs, slow.gibbs, epsilon = 1e-12);
        assert_abs_diff_eq!(fast.joint, slow.joint, epsilon = 1e-12);
        assert_abs_diff_eq!(fast.disagreement, slow.disagreement, epsilon = 1e-12);
    }

    #[test]
    fn vote_inequalities_hold_on_the_empirical_distribution() {
        let (cache, y) = forests_cache();
        let rho = vec![0.5, 0.5];
        let q: Vec<Vec<f64>> = cache
            .voters_per_view()
            .iter()
            .map(|&k| vec![1.0 / k as f64; k])
            .collect();
        let ineq = oracle_inequalities(&cache, &y, &rho, &q).unwrap();
        assert!(ineq.first_order >= -1e-12, "2ĝ slack {}", ineq.first_order);
        assert!(
            ineq.second_order >= -1e-12,
            "4ê slack {}",
            ineq.second_order
        );
        if let Some(c) = ineq.cantelli {
            assert!(c >= -1e-12, "Cantelli slack {c}");
        }
    }

    #[test]
    fn oracle_enforces_its_size_caps() {
        let preds = vec![vec![0u16; 65 * 4]];
        let cache = PredictionCache::from_predictions(preds, vec![65], 2, 4, 0, 0).unwrap();
        let q = vec![vec![1.0 / 65.0; 65]];
        assert!(matches!(
            brute_stats(&cache, &[0, 0, 0, 1], &[1.0], &q),
            Err(OracleError::TooManyVoters(65))
        ));
    }
}
