use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_llro_split, make_lolo_splits, Dataset, LangId, PerformanceRecord, TaskId, NUM_FEATURES};

use super::fit::{fit_model, training_rows, Query};
use super::{EvalError, ModelError, ModelKind, ModelSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Tasks with at most this many distinct targets count as low-data.
pub const LOW_DATA_MAX_TARGETS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Lolo,
    Llro,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Lolo => "lolo",
            Protocol::Llro => "llro",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lolo" => Ok(Protocol::Lolo),
            "llro" => Ok(Protocol::Llro),
            other => Err(EvalError::UnknownProtocol(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub pivot: LangId,
    pub target: LangId,
    pub y: f64,
    pub yhat: f64,
    pub abs_err: f64,
}

/// Predictions for one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// Held-out target languages of the eval task.
    pub heldout: Vec<LangId>,
    pub records: Vec<RecordError>,
    pub mae: f64,
}

/// All folds of one (model, protocol, task) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub model: ModelSpec,
    pub mmlm: String,
    pub protocol: Protocol,
    pub task: TaskId,
    /// Distinct target languages of the task in the full dataset.
    pub n_targets: usize,
    pub folds: Vec<FoldResult>,
    pub mae: f64,
}

impl TaskReport {
    /// Recomputes the task MAE from the per-record errors.
    pub fn recompute_mae(&self) -> f64 {
        match self.protocol {
            Protocol::Lolo => mean(self.folds.iter().map(|f| mean(f.records.iter().map(|r| r.abs_err)))),
            Protocol::Llro => mean(self.folds.iter().flat_map(|f| f.records.iter().map(|r| r.abs_err))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task: TaskId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub mmlm: String,
    pub protocol: Protocol,
    pub tasks: Vec<TaskReport>,
    /// Mean task MAE; `None` when every task failed.
    pub macro_mae: Option<f64>,
    /// Mean MAE over tasks with at most [`LOW_DATA_MAX_TARGETS`] targets.
    pub low_data_mae: Option<f64>,
    pub failures: Vec<TaskFailure>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Builds the report for one (model, mmlm, protocol) from per-task fragments
/// and any tasks that failed to evaluate.
pub fn aggregate(fragments: Vec<TaskReport>, failures: Vec<TaskFailure>) -> Result<EvalReport, EvalError> {
    let first = fragments.first().ok_or(EvalError::NoFragments)?;
    let (model, mmlm, protocol) = (first.model.clone(), first.mmlm.clone(), first.protocol);
    if fragments
        .iter()
        .any(|f| f.protocol != protocol || f.model != model || f.mmlm != mmlm)
    {
        return Err(EvalError::MixedFragments);
    }
    let macro_mae = Some(mean(fragments.iter().map(|f| f.mae)));
    let low: Vec<f64> = fragments
        .iter()
        .filter(|f| f.n_targets <= LOW_DATA_MAX_TARGETS)
        .map(|f| f.mae)
        .collect();
    let low_data_mae = (!low.is_empty()).then(|| mean(low.into_iter()));
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model,
        mmlm,
        protocol,
        tasks: fragments,
        macro_mae,
        low_data_mae,
        failures,
    })
}

/// A report with no successful tasks.
pub fn failed_report(model: ModelSpec, mmlm: String, protocol: Protocol, failures: Vec<TaskFailure>) -> EvalReport {
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model,
        mmlm,
        protocol,
        tasks: Vec::new(),
        macro_mae: None,
        low_data_mae: None,
        failures,
    }
}

/// Fold concurrency from `XFERLENS_THREADS`: `Some(0)` means serial, `None`
/// leaves the choice to the global pool.
pub fn fold_threads() -> Option<usize> {
    std::env::var("XFERLENS_THREADS").ok()?.trim().parse().ok()
}

/// Maps `f` over `items`, concurrently unless configured serial. Output order
/// always follows input order.
fn map_folds<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R, EvalError> + Sync + Send,
) -> Result<Vec<R>, EvalError> {
    match fold_threads() {
        Some(0) => items.iter().map(f).collect(),
        None => items.par_iter().map(f).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| EvalError::Threads(e.to_string()))?
            .install(|| items.par_iter().map(f).collect()),
    }
}

/// Structural checks on one training set handed to a `kind` model for
/// `task`: no eval-task record of a held-out language, and helper tasks
/// either complete (multi-task kinds) or absent (single-task kinds).
pub fn check_lolo_split(
    full: &Dataset,
    train: &Dataset,
    task: &TaskId,
    heldout: &BTreeSet<LangId>,
    kind: ModelKind,
) -> Result<(), EvalError> {
    let rows = training_rows(train, task, kind);
    if let Some(r) = rows.iter().find(|r| &r.task == task && heldout.contains(&r.target)) {
        return Err(EvalError::Leakage(format!(
            "held-out {} of task {task} present in training rows",
            r.target
        )));
    }
    for helper in full.tasks.iter().filter(|t| *t != task) {
        let expected = if kind.uses_helpers() {
            full.task_records(helper).count()
        } else {
            0
        };
        let got = rows.iter().filter(|r| &r.task == helper).count();
        if got != expected {
            return Err(EvalError::Leakage(format!(
                "helper task {helper} has {got} training rows, expected {expected}"
            )));
        }
    }
    Ok(())
}

const NO_FEATURES: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];

fn single_mmlm(ds: &Dataset, task: &TaskId) -> Result<String, EvalError> {
    let models: BTreeSet<&str> = ds.task_records(task).map(|r| r.model.as_str()).collect();
    match models.len() {
        1 => Ok(models.into_iter().next().unwrap().to_owned()),
        _ => Err(EvalError::MixedMmlms(task.to_string())),
    }
}

fn evaluate_fold(
    train: &Dataset,
    test: &[&PerformanceRecord],
    spec: &ModelSpec,
    task: &TaskId,
    heldout: Vec<LangId>,
) -> Result<FoldResult, EvalError> {
    let ctx = |source: ModelError| EvalError::Fit {
        kind: spec.kind.to_string(),
        task: task.to_string(),
        fold: heldout.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("+"),
        source,
    };
    let fitted = fit_model(train, spec, task).map_err(ctx)?;
    let mut records = Vec::with_capacity(test.len());
    for r in test {
        let features = match train.feature_row(&r.pivot, &r.target) {
            Some(f) => f.values(),
            None if matches!(spec.kind, ModelKind::Awt | ModelKind::Aat) => &NO_FEATURES,
            None => return Err(ctx(ModelError::MissingFeatures(r.pivot.to_string(), r.target.to_string()))),
        };
        let q = Query {
            task,
            pivot: &r.pivot,
            target: &r.target,
            features,
        };
        let yhat = fitted.predict(&q).map_err(ctx)?;
        records.push(RecordError {
            pivot: r.pivot.clone(),
            target: r.target.clone(),
            y: r.score,
            yhat,
            abs_err: (yhat - r.score).abs(),
        });
    }
    let mae = mean(records.iter().map(|r| r.abs_err));
    Ok(FoldResult { heldout, records, mae })
}

/// Leave-one-language-out evaluation of `spec` on `task`.
pub fn run_lolo(ds: &Dataset, spec: &ModelSpec, task: &TaskId) -> Result<TaskReport, EvalError> {
    let mmlm = single_mmlm(ds, task)?;
    let splits = make_lolo_splits(ds, task)?;
    for s in &splits {
        check_lolo_split(ds, &s.train, task, &BTreeSet::from([s.held_out.clone()]), spec.kind)?;
    }
    let folds = map_folds(&splits, |s| {
        let test: Vec<&PerformanceRecord> = s.test.records.iter().collect();
        evaluate_fold(&s.train, &test, spec, task, vec![s.held_out.clone()])
    })?;
    let mae = mean(folds.iter().map(|f| f.mae));
    Ok(TaskReport {
        model: spec.clone(),
        mmlm,
        protocol: Protocol::Lolo,
        task: task.clone(),
        n_targets: ds.targets(task).len(),
        folds,
        mae,
    })
}

/// Train on high-resource targets of `task` (plus all helper data), test on
/// the rest.
pub fn run_llro(ds: &Dataset, spec: &ModelSpec, task: &TaskId) -> Result<TaskReport, EvalError> {
    let mmlm = single_mmlm(ds, task)?;
    let split = make_llro_split(ds, task)?;
    let heldout = split.test.targets(task);
    check_lolo_split(ds, &split.train, task, &heldout, spec.kind)?;
    let test: Vec<&PerformanceRecord> = split.test.records.iter().collect();
    let fold = evaluate_fold(&split.train, &test, spec, task, heldout.into_iter().collect())?;
    let mae = fold.mae;
    Ok(TaskReport {
        model: spec.clone(),
        mmlm,
        protocol: Protocol::Llro,
        task: task.clone(),
        n_targets: ds.targets(task).len(),
        folds: vec![fold],
        mae,
    })
}

pub fn run_protocol(ds: &Dataset, spec: &ModelSpec, task: &TaskId, protocol: Protocol) -> Result<TaskReport, EvalError> {
    match protocol {
        Protocol::Lolo => run_lolo(ds, spec, task),
        Protocol::Llro => run_llro(ds, spec, task),
    }
}
