//! Std companion to `vouch-core`: dataset IO and synthesis, the train/sweep
//! pipelines, the run-file report format, and the randomized self-audit
//! behind `vouch verify`.

pub mod audit;
pub mod data;
pub mod report;
pub mod run;
