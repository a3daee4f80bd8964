//! Domain types, CSV ingestion, and train/test split construction.
//!
//! Everything downstream (learners, protocols, attribution) consumes the
//! [`Dataset`] built here. Datasets are immutable once loaded; splits clone
//! the records they need.

mod io;
mod scale;
mod split;
mod types;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{csv_string, load_dataset, parse_float, read_meta, write_features, write_meta, write_scores, write_text};
pub(crate) use io::open_csv;
pub use scale::{standardize, Scaler};
pub use split::{make_llro_split, make_lolo_splits, LlroSplit, LoloSplit};
pub use types::{
    Dataset, FeatureName, FeatureVector, LangId, LangPair, LanguageMeta, PerformanceRecord, TaskData, TaskId,
    NUM_FEATURES,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid language code {0:?}")]
    InvalidLang(String),
    #[error("invalid task name {0:?}")]
    InvalidTask(String),
    #[error("score out of range: {0}")]
    ScoreOutOfRange(f64),
    #[error("pivot equals target ({0})")]
    PivotEqualsTarget(String),
    #[error("duplicate record {0}")]
    DuplicateRecord(String),
    #[error("no feature row for pair {0}")]
    MissingFeatures(String),
    #[error("feature {feature} out of range: {value}")]
    FeatureOutOfRange { feature: &'static str, value: f64 },
    #[error("resource class {0} outside 0..=5")]
    InvalidClass(i64),
    #[error("pre-training word count must be positive, got {0}")]
    NonPositiveWords(f64),
    #[error("invalid number {0:?}")]
    InvalidNumber(String),
    #[error("unknown scale {0:?} (expected unit or percent)")]
    InvalidScale(String),
    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("{path}:{line}: {source}")]
    AtLine {
        path: PathBuf,
        line: u64,
        #[source]
        source: Box<DataError>,
    },
    #[error("{path}:{line}: malformed CSV: {msg}")]
    Csv {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("task {0} not present in dataset")]
    UnknownTask(String),
    #[error("task {task} has {count} target language(s); at least 2 are required")]
    TooFewTargets { task: String, count: usize },
    #[error("no resource class for language {0}")]
    MissingTaxonomy(String),
    #[error("empty {0} side in low-resource split")]
    EmptySplitSide(&'static str),
}

impl DataError {
    /// Line number of the offending input row, when known.
    pub fn line(&self) -> Option<u64> {
        match self {
            DataError::AtLine { line, .. } | DataError::Csv { line, .. } => Some(*line),
            _ => None,
        }
    }
}
