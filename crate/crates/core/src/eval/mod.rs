//! Evaluation harness: fits any model kind under leave-one-language-out or
//! leave-low-resource-out splits, records per-record absolute errors, and
//! aggregates them into per-task and averaged MAE.

mod fit;
mod output;
mod protocol;
mod spec;

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::data::DataError;
use crate::factorization::CmfError;
use crate::gp::GpError;
use crate::meta::MetaError;
use crate::sparse::SparseError;

pub use fit::{fit_model, training_rows, Fitted, Query};
pub use output::{fig1_csv, fig2_csv, helper_sweep, records_csv, render_table, SweepPoint};
pub use protocol::{
    aggregate, check_lolo_split, failed_report, fold_threads, run_llro, run_lolo, run_protocol, EvalReport, FoldResult, Protocol,
    RecordError, TaskFailure, TaskReport, LOW_DATA_MAX_TARGETS, REPORT_SCHEMA_VERSION,
};
pub use spec::{ModelKind, ModelSpec};

/// Failure inside a single model fit or prediction.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Cmf(#[from] CmfError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error("no training rows for task {0}")]
    NoTrainingData(String),
    #[error("no feature row for pair {0}->{1}")]
    MissingFeatures(String, String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{kind} on task {task}, fold {fold}: {source}")]
    Fit {
        kind: String,
        task: String,
        fold: String,
        #[source]
        source: ModelError,
    },
    #[error("leakage: {0}")]
    Leakage(String),
    #[error("cannot aggregate fragments from different protocols or models")]
    MixedFragments,
    #[error("task {0} mixes scores of several multilingual models; select one first")]
    MixedMmlms(String),
    #[error("no fragments to aggregate")]
    NoFragments,
    #[error("unknown model kind {0}")]
    UnknownKind(String),
    #[error("model {kind} has no hyperparameter {name}")]
    UnknownHyper { kind: String, name: String },
    #[error("invalid value for {name}: {msg}")]
    InvalidHyper { name: String, msg: String },
    #[error("unknown protocol {0}")]
    UnknownProtocol(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Threads(String),
}
