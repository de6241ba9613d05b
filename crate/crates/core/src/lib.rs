#![cfg_attr(not(test), no_std)]
//! Core numerics for learning multi-view weighted majority votes with
//! PAC-Bayesian risk certificates.
//!
//! A predictor here is a two-level mixture: a hyper-posterior `ρ` weighs the
//! views of a multi-view dataset, and a per-view posterior `Q_v` weighs the
//! voters (decision trees) trained on view `v`. The resulting weighted
//! majority vote is certified by minimizing an upper bound on its risk that
//! holds with probability `1 − δ`. Bounds come in a first-order family
//! (through the Gibbs risk) and a second-order family (through the joint
//! error and the disagreement, which can exploit unlabeled data), each in a
//! parametric `λ` form and an inverted-KL form, plus C-bound style
//! combinations. Complexity is measured by Rényi divergences of order
//! `α > 1` (KL as the `α → 1` limit) between posteriors and their priors.
//!
//! The crate is `no_std` (with `alloc`): it holds the voter training, the
//! empirical statistics, the divergence/inversion kernels, the bound
//! evaluations and their gradients, and the optimizer loop. Everything that
//! touches files or a terminal lives in the companion CLI crate.

extern crate alloc;

pub mod bounds;
pub mod divergence;
pub mod matrix;
pub mod numeric;
pub mod optimize;
pub mod oracle;
pub mod risks;
pub mod voters;

pub use bounds::{
    eval_bound, evaluate, objective_with_grad, psi_terms, total_divergence, AlphaMode, AlphaState,
    BoundError, BoundKind, BoundReport, EvalConfig, PosteriorParams, Priors, PsiTerms,
};
pub use matrix::Matrix;
pub use optimize::{
    grad_check, minimize, GradCheckReport, MinimizeResult, OptimConfig, OptimizeError,
    OptimizerKind,
};
pub use risks::{
    empirical_stats, empirical_stats_with_grad, majority_vote_predict, mv_risk_on, EmpiricalStats,
};
pub use voters::{
    predict_cache, train_forest, vote_mass, PredictionCache, TreeConfig, ViewEnsemble, VoterError,
};
