//! Averaging baselines and gradient-boosted regression trees.

mod average;
mod gbt;

use thiserror::Error;

pub use average::{predict_aat, predict_awt};
pub use gbt::{fit_gbt, predict_gbt, GbtConfig, Node, Tree, TreeEnsemble};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("no other target of task {task} with pivot {pivot} in training data")]
    NoOtherTargets { task: String, pivot: String },
    #[error("target {target} has no score in any other task for pivot {pivot}")]
    NoHelperScores { pivot: String, target: String },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("input has no features")]
    NoFeatures,
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
