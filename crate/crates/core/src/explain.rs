//! Feature attribution: exact additive attributions for linear models and
//! permutation importance for any model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{csv_string, DataError, Dataset, FeatureName, TaskId, NUM_FEATURES};
use crate::eval::{fit_model, ModelError, ModelKind, ModelSpec, Query};
use crate::sparse::{LinearModel, SparseError};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("linear-shap needs a linear model, {0} is not; use permutation instead")]
    NotLinear(String),
    #[error("unknown attribution method {0}")]
    UnknownMethod(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LinearShap,
    Permutation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::LinearShap => "linear-shap",
            Method::Permutation => "permutation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, ExplainError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear-shap" | "shap" => Ok(Method::LinearShap),
            "permutation" => Ok(Method::Permutation),
            other => Err(ExplainError::UnknownMethod(other.to_owned())),
        }
    }
}

/// Additive attribution of one prediction: `base_value + Σ phi = prediction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub kind: ModelKind,
    pub task: Option<TaskId>,
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub method: Method,
}

/// Exact SHAP values of a linear model against a mean background:
/// `phi_j = w_j (x_j - bg_j)`, `base = wᵀbg + b`.
pub fn linear_shap(
    model: &LinearModel,
    task: Option<&TaskId>,
    x: &[f64],
    background: &[f64],
) -> Result<Attribution, ExplainError> {
    let (w, b) = model.coefficients(task)?;
    for got in [x.len(), background.len()] {
        if got != w.len() {
            return Err(ExplainError::Dimension { expected: w.len(), got });
        }
    }
    let phi = w.iter().zip(x.iter().zip(background)).map(|(w, (x, m))| w * (x - m)).collect();
    let base_value = w.iter().zip(background).map(|(w, m)| w * m).sum::<f64>() + b;
    let kind = match model {
        LinearModel::Lasso(_) => ModelKind::Lasso,
        LinearModel::GroupLasso(_) => ModelKind::GroupLasso,
    };
    Ok(Attribution {
        kind,
        task: task.cloned(),
        phi,
        base_value,
        method: Method::LinearShap,
    })
}

/// Mean over `rows` of `|phi_j|` per feature.
pub fn mean_abs_shap<R: AsRef<[f64]>>(
    model: &LinearModel,
    task: Option<&TaskId>,
    rows: &[R],
    background: &[f64],
) -> Result<Vec<f64>, ExplainError> {
    if rows.is_empty() {
        return Err(ExplainError::TooFewRows { need: 1, got: 0 });
    }
    let mut acc = vec![0.0; background.len()];
    for r in rows {
        let a = linear_shap(model, task, r.as_ref(), background)?;
        for (s, p) in acc.iter_mut().zip(&a.phi) {
            *s += p.abs();
        }
    }
    Ok(acc.into_iter().map(|s| s / rows.len() as f64).collect())
}

/// Increase in MAE when one feature column is shuffled, averaged over
/// `repeats`. Repeat `r` draws its permutations, one per feature in order,
/// from a generator seeded with `seed + r`. `predict` receives the row index
/// and the (possibly permuted) row.
pub fn permutation_importance<T, E>(
    rows: &[Vec<T>],
    y: &[f64],
    repeats: usize,
    seed: u64,
    predict: impl Fn(usize, &[T]) -> Result<f64, E>,
) -> Result<Vec<f64>, ExplainError>
where
    T: Clone,
    ExplainError: From<E>,
{
    if rows.len() < 2 {
        return Err(ExplainError::TooFewRows { need: 2, got: rows.len() });
    }
    if y.len() != rows.len() {
        return Err(ExplainError::Dimension { expected: rows.len(), got: y.len() });
    }
    if repeats == 0 {
        return Err(ExplainError::ZeroRepeats);
    }
    let n = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(ExplainError::Dimension { expected: n, got: r.len() });
    }
    let mae = |data: &[Vec<T>]| -> Result<f64, ExplainError> {
        let mut s = 0.0;
        for (i, (r, y)) in data.iter().zip(y).enumerate() {
            s += (predict(i, r)? - y).abs();
        }
        Ok(s / data.len() as f64)
    };
    let base = mae(rows)?;
    let mut imp = vec![0.0; n];
    let mut shuffled = rows.to_vec();
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        for (j, slot) in imp.iter_mut().enumerate() {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(&mut rng);
            for (dst, &src) in shuffled.iter_mut().zip(&order) {
                dst[j] = rows[src][j].clone();
            }
            *slot += mae(&shuffled)? - base;
            for (dst, src) in shuffled.iter_mut().zip(rows) {
                dst[j] = src[j].clone();
            }
        }
    }
    Ok(imp.into_iter().map(|v| v / repeats as f64).collect())
}

/// Per-feature attribution summary of one model on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAttribution {
    pub kind: ModelKind,
    pub task: TaskId,
    pub values: [f64; NUM_FEATURES],
    pub method: Method,
}

/// Fits `spec` for `task` on all of `ds` and summarizes feature effects over
/// the task's own rows: mean |phi| for linear-shap, MAE increase for
/// permutation.
pub fn explain_task(
    ds: &Dataset,
    spec: &ModelSpec,
    task: &TaskId,
    method: Method,
    repeats: usize,
) -> Result<TaskAttribution, ExplainError> {
    if method == Method::LinearShap && !spec.kind.is_linear() {
        return Err(ExplainError::NotLinear(spec.kind.to_string()));
    }
    let fitted = fit_model(ds, spec, task)?;
    let records: Vec<_> = ds.task_records(task).collect();
    let raw: Vec<Vec<Option<f64>>> = records
        .iter()
        .map(|r| {
            ds.feature_row(&r.pivot, &r.target)
                .map(|f| f.values().to_vec())
                .ok_or_else(|| ModelError::MissingFeatures(r.pivot.to_string(), r.target.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let values = match method {
        Method::LinearShap => {
            let (model, scaler) = fitted.linear().expect("linear kind fits a linear model");
            let background = scaler.transform_dense(&scaler.means);
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| scaler.transform(r)).collect();
            mean_abs_shap(&model, Some(task), &rows, &background)?
        }
        Method::Permutation => {
            let y: Vec<f64> = records.iter().map(|r| r.score).collect();
            permutation_importance(&raw, &y, repeats, spec.seed, |i, row| {
                let features: [Option<f64>; NUM_FEATURES] = row.try_into().expect("feature width");
                fitted.predict(&Query {
                    task,
                    pivot: &records[i].pivot,
                    target: &records[i].target,
                    features: &features,
                })
            })?
        }
    };
    Ok(TaskAttribution {
        kind: spec.kind,
        task: task.clone(),
        values: values.try_into().expect("one value per feature"),
        method,
    })
}

/// `model,task,feature,value,method`, one row per (task, feature).
pub fn attribution_csv(items: &[TaskAttribution], preamble: &[String]) -> Result<String, ExplainError> {
    let rows = items.iter().flat_map(|a| {
        FeatureName::ALL.iter().map(move |f| {
            vec![
                a.kind.to_string(),
                a.task.to_string(),
                f.as_str().to_owned(),
                a.values[f.index()].to_string(),
                a.method.to_string(),
            ]
        })
    });
    Ok(csv_string(preamble, &["model", "task", "feature", "value", "method"], rows)?)
}

/// Features whose attribution is zero in every task.
pub fn zero_in_all_tasks(items: &[TaskAttribution]) -> BTreeSet<FeatureName> {
    FeatureName::ALL
        .into_iter()
        .filter(|f| items.iter().all(|a| a.values[f.index()] == 0.0))
        .collect()
}
