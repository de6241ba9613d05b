//! Empirical risk statistics of the weighted majority vote.
//!
//! Everything here is a plain average of per-sample quantities of the vote
//! mass `mass[i][y] = Σ_v ρ_v Σ_h Q_v[h]·1[pred_{v,h}(i) = y]`:
//!
//! * Gibbs risk `ĝ`: mean of `1 − mass[i][y_i]` over the labeled block;
//! * joint error `ê`: mean of `(1 − mass[i][y_i])²` over the labeled block;
//! * disagreement `d̂`: mean of `1 − Σ_y mass[i][y]²` over labeled ∪
//!   unlabeled (disagreement needs no labels, so the unlabeled pool counts);
//! * majority-vote risk: mean 0/1 error of `argmax_y mass[i][y]`, ties
//!   resolved to the lowest class id.
//!
//! Gradients are with respect to the raw simplex weights (ρ, Q); softmax
//! reparameterization is pulled back by the optimizer, not here.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use crate::numeric::{argmax_tie_lowest, KahanSum};
use crate::voters::{check_weights, vote_mass, PredictionCache, VoterError};

/// The three empirical statistics every bound is built from, plus the sample
/// counts and class count that scale them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    /// Gibbs risk `ĝ` on the `m` labeled samples.
    pub gibbs: f64,
    /// Expected joint error `ê` of two independent voters, on the labeled
    /// samples.
    pub joint: f64,
    /// Expected disagreement `d̂` of two independent voters, on all `n`
    /// labeled and unlabeled samples.
    pub disagreement: f64,
    /// Number of labeled samples.
    pub m: usize,
    /// Number of samples entering the disagreement (labeled + unlabeled).
    pub n: usize,
    /// Number of classes.
    pub n_classes: usize,
}

/// Gradients of the three statistics with respect to the raw weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsGrads {
    pub d_gibbs_rho: Vec<f64>,
    pub d_joint_rho: Vec<f64>,
    pub d_dis_rho: Vec<f64>,
    pub d_gibbs_q: Vec<Vec<f64>>,
    pub d_joint_q: Vec<Vec<f64>>,
    pub d_dis_q: Vec<Vec<f64>>,
}

fn check_labels(labels: &[u16], expected: usize, n_classes: usize) -> Result<(), VoterError> {
    if labels.len() != expected {
        return Err(VoterError::LabelCount {
            got: labels.len(),
            expected,
        });
    }
    for &y in labels {
        if (y as usize) >= n_classes {
            return Err(VoterError::ClassId {
                label: y,
                classes: n_classes,
            });
        }
    }
    Ok(())
}

/// Majority-vote predictions over a sample block.
pub fn majority_vote_predict(
    cache: &PredictionCache,
    rho: &[f64],
    q: &[Vec<f64>],
    block: Range<usize>,
) -> Result<Vec<u16>, VoterError> {
    let c = cache.n_classes();
    let mass = vote_mass(cache, rho, q, block.clone())?;
    Ok((0..block.len())
        .map(|i| argmax_tie_lowest(&mass[i * c..(i + 1) * c]) as u16)
        .collect())
}

/// 0/1 risk of the majority vote over a block with known labels.
pub fn mv_risk_on(
    cache: &PredictionCache,
    labels: &[u16],
    rho: &[f64],
    q: &[Vec<f64>],
    block: Range<usize>,
) -> Result<f64, VoterError> {
    check_labels(labels, block.len(), cache.n_classes())?;
    if block.is_empty() {
        return Ok(0.0);
    }
    let preds = majority_vote_predict(cache, rho, q, block)?;
    let errors = preds
        .iter()
        .zip(labels)
        .filter(|(p, y)| p != y)
        .count();
    Ok(errors as f64 / labels.len() as f64)
}

/// Computes `(ĝ, ê, d̂)` for the given weights, over the cache's labeled and
/// disagreement blocks. `labels` covers the labeled block.
pub fn empirical_stats(
    cache: &PredictionCache,
    labels: &[u16],
    rho: &[f64],
    q: &[Vec<f64>],
) -> Result<EmpiricalStats, VoterError> {
    let (stats, _) = stats_impl(cache, labels, rho, q, false)?;
    Ok(stats)
}

/// As [`empirical_stats`], additionally returning gradients with respect to
/// every raw weight.
pub fn empirical_stats_with_grad(
    cache: &PredictionCache,
    labels: &[u16],
    rho: &[f64],
    q: &[Vec<f64>],
) -> Result<(EmpiricalStats, StatsGrads), VoterError> {
    let (stats, grads) = stats_impl(cache, labels, rho, q, true)?;
    Ok((stats, grads.expect("grads requested")))
}

fn stats_impl(
    cache: &PredictionCache,
    labels: &[u16],
    rho: &[f64],
    q: &[Vec<f64>],
    want_grads: bool,
) -> Result<(EmpiricalStats, Option<StatsGrads>), VoterError> {
    check_weights(cache, rho, q)?;
    let m = cache.n_labeled();
    let c = cache.n_classes();
    check_labels(labels, m, c)?;

    // One mass pass over labeled ∪ unlabeled covers every statistic: the
    // labeled block is its prefix.
    let dis_block = cache.disagreement_range();
    let n = dis_block.len();
    let mass = vote_mass(cache, rho, q, dis_block.clone())?;

    let mut gibbs_sum = KahanSum::new();
    let mut joint_sum = KahanSum::new();
    let mut dis_sum = KahanSum::new();
    let mut g = vec![0.0f64; m];
    for i in 0..n {
        let row = &mass[i * c..(i + 1) * c];
        if i < m {
            let gi = 1.0 - row[labels[i] as usize];
            g[i] = gi;
            gibbs_sum.add(gi);
            joint_sum.add(gi * gi);
        }
        let sq: f64 = row.iter().map(|&p| p * p).sum();
        dis_sum.add(1.0 - sq);
    }
    // Each statistic is a mean of per-sample probabilities, but when the
    // vote mass concentrates on one class the summands sit at 0 or 1 up to
    // rounding (e.g. `1 − Σ_y w_y²` with `Σ w_y = 1 + 2⁻⁵²`), and the mean
    // can land a few ulps outside [0, 1] — which the inversion kernels treat
    // as a domain violation. Clamp at the source.
    let unit = |x: f64| x.clamp(0.0, 1.0);
    let stats = EmpiricalStats {
        gibbs: unit(gibbs_sum.value() / m as f64),
        joint: unit(joint_sum.value() / m as f64),
        disagreement: unit(dis_sum.value() / n as f64),
        m,
        n,
        n_classes: c,
    };
    if !want_grads {
        return Ok((stats, None));
    }

    let n_views = cache.n_views();
    let inv_m = 1.0 / m as f64;
    let inv_n = 1.0 / n as f64;
    let mut grads = StatsGrads {
        d_gibbs_rho: vec![0.0; n_views],
        d_joint_rho: vec![0.0; n_views],
        d_dis_rho: vec![0.0; n_views],
        d_gibbs_q: q.iter().map(|qv| vec![0.0; qv.len()]).collect(),
        d_joint_q: q.iter().map(|qv| vec![0.0; qv.len()]).collect(),
        d_dis_q: q.iter().map(|qv| vec![0.0; qv.len()]).collect(),
    };

    // Per-view class share s_v[i][y] = Σ_h Q_v[h]·1[pred = y]; one view at a
    // time keeps memory at O(n·C).
    let mut share = vec![0.0f64; n * c];
    for (v, qv) in q.iter().enumerate() {
        share.iter_mut().for_each(|s| *s = 0.0);
        for (h, &qvh) in qv.iter().enumerate() {
            let mut dg_q = KahanSum::new();
            let mut de_q = KahanSum::new();
            let mut dd_q = KahanSum::new();
            for i in dis_block.clone() {
                let pred = cache.pred(v, h, i) as usize;
                share[i * c + pred] += qvh;
                // ∂mass[i][pred]/∂Q_v[h] = ρ_v, so the chain rules collapse
                // to indicator sums.
                if i < m && pred == labels[i] as usize {
                    dg_q.add(1.0);
                    de_q.add(g[i]);
                }
                dd_q.add(mass[i * c + pred]);
            }
            grads.d_gibbs_q[v][h] = -rho[v] * inv_m * dg_q.value();
            grads.d_joint_q[v][h] = -2.0 * rho[v] * inv_m * de_q.value();
            grads.d_dis_q[v][h] = -2.0 * rho[v] * inv_n * dd_q.value();
        }
        let mut dg_rho = KahanSum::new();
        let mut de_rho = KahanSum::new();
        let mut dd_rho = KahanSum::new();
        for i in 0..n {
            if i < m {
                let sy = share[i * c + labels[i] as usize];
                dg_rho.add(sy);
                de_rho.add(g[i] * sy);
            }
            let mut dot = 0.0;
            for y in 0..c {
                dot += mass[i * c + y] * share[i * c + y];
            }
            dd_rho.add(dot);
        }
        grads.d_gibbs_rho[v] = -inv_m * dg_rho.value();
        grads.d_joint_rho[v] = -2.0 * inv_m * de_rho.value();
        grads.d_dis_rho[v] = -2.0 * inv_n * dd_rho.value();
    }
    Ok((stats, Some(grads)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::voters::{predict_cache, train_forest, TreeConfig};
    use approx::assert_abs_diff_eq;

    fn toy_cache() -> (PredictionCache, Vec<u16>) {
        // Two views over the same 1-d line, labels split at 1.5; six extra
        // unlabeled points thicken the disagreement block.
        let x = Matrix::new(6, 1, vec![0.0, 0.6, 1.2, 1.8, 2.4, 3.0]);
        let y = vec![0, 0, 0, 1, 1, 1];
        let unlabeled = Matrix::new(3, 1, vec![0.3, 1.5, 2.7]);
        let mut ensembles = Vec::new();
        for view in 0..2 {
            ensembles.push(
                train_forest(
                    &x,
                    &y,
                    2,
                    view,
                    &TreeConfig {
                        n_trees: 5,
                        max_depth: 2,
                        seed: 11,
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

    fn uniform_weights(cache: &PredictionCache) -> (Vec<f64>, Vec<Vec<f64>>) {
        let v = cache.n_views();
        let rho = vec![1.0 / v as f64; v];
        let q = cache
            .voters_per_view()
            .iter()
            .map(|&k| vec![1.0 / k as f64; k])
            .collect();
        (rho, q)
    }

    #[test]
    fn binary_identity_links_gibbs_joint_and_disagreement() {
        // In the binary case, per labeled sample: g = e + d/2. Restricting
        // the disagreement to the labeled block makes the identity exact.
        let x = Matrix::new(6, 1, vec![0.0, 0.6, 1.2, 1.8, 2.4, 3.0]);
        let y: Vec<u16> = vec![0, 0, 0, 1, 1, 1];
        let ens = train_forest(
            &x,
            &y,
            2,
            0,
            &TreeConfig {
                n_trees: 7,
                max_depth: 1,
                seed: 5,
            },
        )
        .unwrap();
        let cache = predict_cache(&[ens], core::slice::from_ref(&x), None, None).unwrap();
        let (rho, q) = uniform_weights(&cache);
        let s = empirical_stats(&cache, &y, &rho, &q).unwrap();
        assert_abs_diff_eq!(s.gibbs, s.joint + s.disagreement / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mv_risk_counts_argmax_errors_with_low_class_ties() {
        // Hand-built cache: one view, two voters that disagree everywhere.
        // With uniform Q the mass ties at 0.5/0.5, so argmax resolves to
        // class 0 and only the y=1 samples are errors.
        let preds = vec![vec![0, 0, 1, 1]]; // voter 0: 0,0  voter 1: 1,1 (2 samples)
        let cache = PredictionCache::from_predictions(preds, vec![2], 2, 2, 0, 0).unwrap();
        let rho = vec![1.0];
        let q = vec![vec![0.5, 0.5]];
        let risk = mv_risk_on(&cache, &[0, 1], &rho, &q, 0..2).unwrap();
        assert_abs_diff_eq!(risk, 0.5);
        let preds = majority_vote_predict(&cache, &rho, &q, 0..2).unwrap();
        assert_eq!(preds, vec![0, 0]);
    }

    #[test]
    fn stats_match_a_direct_per_sample_recomputation() {
        let (cache, y) = toy_cache();
        let (rho, q) = uniform_weights(&cache);
        let s = empirical_stats(&cache, &y, &rho, &q).unwrap();

        // Recompute from scratch with explicit loops over voters.
        let m = cache.n_labeled();
        let n = m + cache.n_unlabeled();
        let c = cache.n_classes();
        let mut gibbs = 0.0;
        let mut joint = 0.0;
        let mut dis = 0.0;
        for i in 0..n {
            let mut mass = vec![0.0f64; c];
            for v in 0..cache.n_views() {
                for h in 0..cache.voters_per_view()[v] {
                    mass[cache.pred(v, h, i) as usize] += rho[v] * q[v][h];
                }
            }
            if i < m {
                let gi = 1.0 - mass[y[i] as usize];
                gibbs += gi;
                joint += gi * gi;
            }
            dis += 1.0 - mass.iter().map(|p| p * p).sum::<f64>();
        }
        assert_abs_diff_eq!(s.gibbs, gibbs / m as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(s.joint, joint / m as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(s.disagreement, dis / n as f64, epsilon = 1e-12);
        assert_eq!(s.m, m);
        assert_eq!(s.n, n);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let (cache, y) = toy_cache();
        // Non-uniform weights so no gradient vanishes by symmetry.
        let rho = vec![0.3, 0.7];
        let q: Vec<Vec<f64>> = vec![
            vec![0.1, 0.2, 0.3, 0.25, 0.15],
            vec![0.3, 0.1, 0.2, 0.15, 0.25],
        ];
        let (_, grads) = empirical_stats_with_grad(&cache, &y, &rho, &q).unwrap();

        let h = 1e-6;
        // The statistics are multilinear in the raw weights, so perturbing
        // one coordinate off the simplex is fine for checking partials.
        let eval = |rho: &[f64], q: &[Vec<f64>]| {
            let mut gibbs = 0.0;
            let mut joint = 0.0;
            let mut dis = 0.0;
            let m = cache.n_labeled();
            let n = m + cache.n_unlabeled();
            let c = cache.n_classes();
            for i in 0..n {
                let mut mass = vec![0.0f64; c];
                for v in 0..cache.n_views() {
                    for hh in 0..cache.voters_per_view()[v] {
                        mass[cache.pred(v, hh, i) as usize] += rho[v] * q[v][hh];
                    }
                }
                if i < m {
                    let gi = 1.0 - mass[y[i] as usize];
                    gibbs += gi;
                    joint += gi * gi;
                }
                dis += 1.0 - mass.iter().map(|p| p * p).sum::<f64>();
            }
            (gibbs / m as f64, joint / m as f64, dis / n as f64)
        };

        for v in 0..2 {
            let mut up = rho.clone();
            let mut dn = rho.clone();
            up[v] += h;
            dn[v] -= h;
            let (gu, ju, du) = eval(&up, &q);
            let (gd, jd, dd) = eval(&dn, &q);
            assert_abs_diff_eq!(grads.d_gibbs_rho[v], (gu - gd) / (2.0 * h), epsilon = 1e-6);
            assert_abs_diff_eq!(grads.d_joint_rho[v], (ju - jd) / (2.0 * h), epsilon = 1e-6);
            assert_abs_diff_eq!(grads.d_dis_rho[v], (du - dd) / (2.0 * h), epsilon = 1e-6);
            for hh in 0..q[v].len() {
                let mut qu = q.clone();
                let mut qd = q.clone();
                qu[v][hh] += h;
                qd[v][hh] -= h;
                let (gu, ju, du) = eval(&rho, &qu);
                let (gd, jd, dd) = eval(&rho, &qd);
                assert_abs_diff_eq!(
                    grads.d_gibbs_q[v][hh],
                    (gu - gd) / (2.0 * h),
                    epsilon = 1e-6
                );
                assert_abs_diff_eq!(
                    grads.d_joint_q[v][hh],
                    (ju - jd) / (2.0 * h),
                    epsilon = 1e-6
                );
                assert_abs_diff_eq!(grads.d_dis_q[v][hh], (du - dd) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn label_validation_rejects_bad_inputs() {
        let (cache, mut y) = toy_cache();
        let (rho, q) = uniform_weights(&cache);
        y.pop();
        assert!(matches!(
            empirical_stats(&cache, &y, &rho, &q),
            Err(VoterError::LabelCount { .. })
        ));
        y.push(9);
        assert!(matches!(
            empirical_stats(&cache, &y, &rho, &q),
            Err(VoterError::ClassId { label: 9, .. })
        ));
    }
}
