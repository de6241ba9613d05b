//! Voters: random forests of axis-aligned decision trees, trained per view,
//! and the prediction cache the bound machinery evaluates against.
//!
//! Trees are grown CART-style on bootstrap resamples with Gini impurity,
//! midpoint thresholds, and `⌈√d⌉` candidate features per split. Every tree
//! draws from its own deterministic RNG stream `seed ⊕ (view·10007 + tree)`,
//! so training gives bit-identical forests no matter how work is scheduled.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::divergence::SIMPLEX_TOL;
use crate::matrix::Matrix;
use crate::numeric::{ceil_sqrt, fabs, KahanSum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoterError {
    #[error("training needs at least one sample")]
    EmptyInput,
    #[error("features have {features} rows but there are {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("training labels contain a single class; voters would be constant")]
    SingleClass,
    #[error("label {label} is outside the declared {classes} classes")]
    ClassId { label: u16, classes: usize },
    #[error("view {view} has {got} features but the ensemble expects {expected}")]
    FeatureDim { view: usize, got: usize, expected: usize },
    #[error("view {view} block has {got} rows, expected {expected}")]
    BlockRows { view: usize, got: usize, expected: usize },
    #[error("expected {expected} views, got {got}")]
    ViewCount { expected: usize, got: usize },
    #[error("weight vector for {what} is not a probability distribution")]
    NotSimplex { what: &'static str },
    #[error("weights for view {view} have length {got}, expected {expected}")]
    WeightLength { view: usize, got: usize, expected: usize },
    #[error("sample block {start}..{end} exceeds the cached {total} samples")]
    BlockOutOfRange { start: usize, end: usize, total: usize },
    #[error("{got} labels supplied for a block of {expected} samples")]
    LabelCount { got: usize, expected: usize },
}

/// One node of a decision tree. Samples with `x[feature] <= threshold` go
/// left.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: u16,
    },
}

/// An axis-aligned decision tree; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> u16 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Forest of trees trained on one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEnsemble {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl ViewEnsemble {
    pub fn n_voters(&self) -> usize {
        self.trees.len()
    }
}

/// Forest training configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 1,
            seed: 0,
        }
    }
}

/// Majority class of `counts`, ties resolved to the lowest class id.
fn majority_class(counts: &[u32]) -> u16 {
    let mut best = 0usize;
    for (c, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = c;
        }
    }
    best as u16
}

fn gini(counts: &[u32], total: f64) -> f64 {
    let mut s = 0.0;
    for &n in counts {
        let p = n as f64 / total;
        s += p * p;
    }
    1.0 - s
}

struct TreeBuilder<'a> {
    features: &'a Matrix,
    labels: &'a [u16],
    n_classes: usize,
    max_depth: usize,
    n_candidates: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Grows the subtree over `samples`, returning its root index.
    fn grow(&mut self, samples: &mut Vec<usize>, depth: usize, rng: &mut ChaCha12Rng) -> usize {
        let mut counts = vec![0u32; self.n_classes];
        for &i in samples.iter() {
            counts[self.labels[i] as usize] += 1;
        }
        let n = samples.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < 2 || depth >= self.max_depth {
            let class = majority_class(&counts);
            self.nodes.push(Node::Leaf { class });
            return self.nodes.len() - 1;
        }

        let parent_gini = gini(&counts, n as f64);
        let d = self.features.cols();
        // Draw candidate features without replacement (partial Fisher–Yates).
        let mut order: Vec<usize> = (0..d).collect();
        for i in 0..self.n_candidates {
            let j = rng.random_range(i..d);
            order.swap(i, j);
        }

        let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
        let mut sorted: Vec<(f64, u16)> = Vec::with_capacity(n);
        for &f in &order[..self.n_candidates] {
            sorted.clear();
            sorted.extend(
                samples
                    .iter()
                    .map(|&i| (self.features.get(i, f), self.labels[i])),
            );
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            // Walk split positions; thresholds are midpoints between
            // consecutive distinct values.
            let mut left = vec![0u32; self.n_classes];
            let mut right = counts.clone();
            for k in 0..n - 1 {
                let (v, y) = sorted[k];
                left[y as usize] += 1;
                right[y as usize] -= 1;
                let next = sorted[k + 1].0;
                if next <= v {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let weighted =
                    (nl * gini(&left, nl) + nr * gini(&right, nr)) / n as f64;
                let decrease = parent_gini - weighted;
                if best.map_or(true, |(bd, _, _)| decrease > bd) {
                    best = Some((decrease, f, 0.5 * (v + next)));
                }
            }
        }

        match best {
            Some((decrease, feature, threshold)) if decrease > 1e-12 => {
                let placeholder = self.nodes.len();
                self.nodes.push(Node::Leaf { class: 0 });
                let (mut ls, mut rs): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
                for &i in samples.iter() {
                    if self.features.get(i, feature) <= threshold {
                        ls.push(i);
                    } else {
                        rs.push(i);
                    }
                }
                let left = self.grow(&mut ls, depth + 1, rng);
                let right = self.grow(&mut rs, depth + 1, rng);
                self.nodes[placeholder] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                placeholder
            }
            _ => {
                let class = majority_class(&counts);
                self.nodes.push(Node::Leaf { class });
                self.nodes.len() - 1
            }
        }
    }
}

/// Trains a random forest on one view.
///
/// Each tree sees a bootstrap resample of the rows and considers `⌈√d⌉`
/// features per split. Tree `t` of view `view` uses the RNG stream
/// `cfg.seed ⊕ (view·10007 + t)`.
pub fn train_forest(
    features: &Matrix,
    labels: &[u16],
    n_classes: usize,
    view: usize,
    cfg: &TreeConfig,
) -> Result<ViewEnsemble, VoterError> {
    let m = features.rows();
    if m == 0 {
        return Err(VoterError::EmptyInput);
    }
    if labels.len() != m {
        return Err(VoterError::LengthMismatch {
            features: m,
            labels: labels.len(),
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
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(VoterError::SingleClass);
    }

    let n_candidates = ceil_sqrt(features.cols()).min(features.cols()).max(1);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let stream = cfg.seed ^ ((view as u64) * 10007 + t as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(stream);
        let mut sample: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        let mut builder = TreeBuilder {
            features,
            labels,
            n_classes,
            max_depth: cfg.max_depth.max(1),
            n_candidates,
            nodes: Vec::new(),
        };
        let root = builder.grow(&mut sample, 0, &mut rng);
        debug_assert_eq!(root, 0);
        trees.push(DecisionTree {
            nodes: builder.nodes,
        });
    }
    Ok(ViewEnsemble {
        trees,
        n_features: features.cols(),
        n_classes,
    })
}

/// Cached predictions of every voter on every sample, with the samples laid
/// out as three contiguous blocks: `[labeled | unlabeled | test]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCache {
    /// Per view, a `voters × total_samples` row-major class-id matrix.
    preds: Vec<Vec<u16>>,
    voters_per_view: Vec<usize>,
    n_classes: usize,
    m_labeled: usize,
    n_unlabeled: usize,
    n_test: usize,
}

impl PredictionCache {
    /// Assembles a cache from raw per-view prediction matrices
    /// (`voters × (m + n_u + n_test)` row-major). This is the entry point
    /// for externally supplied voters.
    pub fn from_predictions(
        preds: Vec<Vec<u16>>,
        voters_per_view: Vec<usize>,
        n_classes: usize,
        m_labeled: usize,
        n_unlabeled: usize,
        n_test: usize,
    ) -> Result<Self, VoterError> {
        if preds.len() != voters_per_view.len() || preds.is_empty() {
            return Err(VoterError::ViewCount {
                expected: voters_per_view.len(),
                got: preds.len(),
            });
        }
        let total = m_labeled + n_unlabeled + n_test;
        for (v, (block, &voters)) in preds.iter().zip(&voters_per_view).enumerate() {
            if block.len() != voters * total {
                return Err(VoterError::BlockRows {
                    view: v,
                    got: block.len(),
                    expected: voters * total,
                });
            }
            for &c in block {
                if (c as usize) >= n_classes {
                    return Err(VoterError::ClassId {
                        label: c,
                        classes: n_classes,
                    });
                }
            }
        }
        Ok(Self {
            preds,
            voters_per_view,
            n_classes,
            m_labeled,
            n_unlabeled,
            n_test,
        })
    }

    pub fn n_views(&self) -> usize {
        self.voters_per_view.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn voters_per_view(&self) -> &[usize] {
        &self.voters_per_view
    }

    pub fn n_labeled(&self) -> usize {
        self.m_labeled
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n_unlabeled
    }

    pub fn n_test(&self) -> usize {
        self.n_test
    }

    pub fn total_samples(&self) -> usize {
        self.m_labeled + self.n_unlabeled + self.n_test
    }

    /// Columns of the labeled training block.
    pub fn labeled_range(&self) -> Range<usize> {
        0..self.m_labeled
    }

    /// Columns entering the disagreement statistic: labeled ∪ unlabeled.
    pub fn disagreement_range(&self) -> Range<usize> {
        0..self.m_labeled + self.n_unlabeled
    }

    pub fn test_range(&self) -> Range<usize> {
        let start = self.m_labeled + self.n_unlabeled;
        start..start + self.n_test
    }

    /// Predicted class of voter `h` of view `v` on sample column `i`.
    #[inline]
    pub fn pred(&self, v: usize, h: usize, i: usize) -> u16 {
        self.preds[v][h * self.total_samples() + i]
    }

    fn check_block(&self, block: &Range<usize>) -> Result<(), VoterError> {
        if block.end > self.total_samples() || block.start > block.end {
            return Err(VoterError::BlockOutOfRange {
                start: block.start,
                end: block.end,
                total: self.total_samples(),
            });
        }
        Ok(())
    }
}

/// Runs every ensemble over the labeled/unlabeled/test feature blocks and
/// caches the predicted classes.
pub fn predict_cache(
    ensembles: &[ViewEnsemble],
    labeled: &[Matrix],
    unlabeled: Option<&[Matrix]>,
    test: Option<&[Matrix]>,
) -> Result<PredictionCache, VoterError> {
    let v = ensembles.len();
    if v == 0 || labeled.len() != v {
        return Err(VoterError::ViewCount {
            expected: v.max(1),
            got: labeled.len(),
        });
    }
    if let Some(u) = unlabeled {
        if u.len() != v {
            return Err(VoterError::ViewCount {
                expected: v,
                got: u.len(),
            });
        }
    }
    if let Some(t) = test {
        if t.len() != v {
            return Err(VoterError::ViewCount {
                expected: v,
                got: t.len(),
            });
        }
    }
    let m = labeled[0].rows();
    let n_u = unlabeled.map_or(0, |u| u[0].rows());
    let n_t = test.map_or(0, |t| t[0].rows());
    let n_classes = ensembles[0].n_classes;
    let total = m + n_u + n_t;

    let mut preds = Vec::with_capacity(v);
    let mut voters_per_view = Vec::with_capacity(v);
    for (view, ens) in ensembles.iter().enumerate() {
        let blocks: [Option<&Matrix>; 3] = [
            Some(&labeled[view]),
            unlabeled.map(|u| &u[view]),
            test.map(|t| &t[view]),
        ];
        for (slot, expected) in blocks.iter().zip([m, n_u, n_t]) {
            let Some(block) = slot else { continue };
            if block.rows() != expected {
                return Err(VoterError::BlockRows {
                    view,
                    got: block.rows(),
                    expected,
                });
            }
            if block.cols() != ens.n_features {
                return Err(VoterError::FeatureDim {
                    view,
                    got: block.cols(),
                    expected: ens.n_features,
                });
            }
        }
        let mut data = vec![0u16; ens.n_voters() * total];
        for (h, tree) in ens.trees.iter().enumerate() {
            let row = &mut data[h * total..(h + 1) * total];
            let mut col = 0;
            for block in blocks.iter().flatten() {
                for i in 0..block.rows() {
                    row[col] = tree.predict(block.row(i));
                    col += 1;
                }
            }
        }
        preds.push(data);
        voters_per_view.push(ens.n_voters());
    }
    PredictionCache::from_predictions(preds, voters_per_view, n_classes, m, n_u, n_t)
}

pub(crate) fn check_weights(
    cache: &PredictionCache,
    rho: &[f64],
    q: &[Vec<f64>],
) -> Result<(), VoterError> {
    if rho.len() != cache.n_views() {
        return Err(VoterError::ViewCount {
            expected: cache.n_views(),
            got: rho.len(),
        });
    }
    if q.len() != cache.n_views() {
        return Err(VoterError::ViewCount {
            expected: cache.n_views(),
            got: q.len(),
        });
    }
    let simplex_ok = |w: &[f64]| {
        let mut s = KahanSum::new();
        for &x in w {
            if !(x >= 0.0) {
                return false;
            }
            s.add(x);
        }
        fabs(s.value() - 1.0) <= SIMPLEX_TOL
    };
    if !simplex_ok(rho) {
        return Err(VoterError::NotSimplex { what: "rho" });
    }
    for (v, qv) in q.iter().enumerate() {
        if qv.len() != cache.voters_per_view[v] {
            return Err(VoterError::WeightLength {
                view: v,
                got: qv.len(),
                expected: cache.voters_per_view[v],
            });
        }
        if !simplex_ok(qv) {
            return Err(VoterError::NotSimplex { what: "Q" });
        }
    }
    Ok(())
}

/// Per-sample, per-class weighted vote mass over a sample block:
/// `mass[i][y] = Σ_v ρ_v Σ_h Q_v[h]·1[pred_{v,h}(i) = y]`, returned row-major
/// (`block.len() × n_classes`). Rows sum to 1 up to float rounding.
pub fn vote_mass(
    cache: &PredictionCache,
    rho: &[f64],
    q: &[Vec<f64>],
    block: Range<usize>,
) -> Result<Vec<f64>, VoterError> {
    check_weights(cache, rho, q)?;
    cache.check_block(&block)?;
    let c = cache.n_classes();
    let len = block.end - block.start;
    let mut mass = vec![0.0f64; len * c];
    let total = cache.total_samples();
    for (v, qv) in q.iter().enumerate() {
        let rv = rho[v];
        let view_preds = &cache.preds[v];
        for (h, &qvh) in qv.iter().enumerate() {
            let w = rv * qvh;
            if w == 0.0 {
                continue;
            }
            let row = &view_preds[h * total..(h + 1) * total];
            for (off, i) in block.clone().enumerate() {
                mass[off * c + row[i] as usize] += w;
            }
        }
    }
    Ok(mass)
}
