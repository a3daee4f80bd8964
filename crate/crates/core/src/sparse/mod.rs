//! Sparse linear regressors: single-task Lasso and multi-task Group Lasso
//! with an ℓ1/ℓ2 row penalty that selects a feature subset shared by all
//! tasks.

mod group_lasso;
mod lasso;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TaskId;
use crate::numerics::{dot, Matrix};

pub use group_lasso::{fit_group_lasso, group_lasso_objective, GroupLassoConfig, GroupLassoModel};
pub use lasso::{fit_lasso, lasso_objective, soft_threshold, LassoConfig, LassoModel};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("no tasks to fit")]
    NoTasks,
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("a task is required to predict with a multi-task model")]
    TaskRequired,
    #[error("regularization strength must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
}

/// Either fitted linear model, as consumed by prediction and attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinearModel {
    Lasso(LassoModel),
    GroupLasso(GroupLassoModel),
}

impl LinearModel {
    /// Weight vector and intercept used for `task`.
    pub fn coefficients(&self, task: Option<&TaskId>) -> Result<(Vec<f64>, f64), SparseError> {
        match self {
            LinearModel::Lasso(m) => Ok((m.weights.clone(), m.intercept)),
            LinearModel::GroupLasso(m) => {
                let task = task.ok_or(SparseError::TaskRequired)?;
                let k = m.task_index(task)?;
                Ok((m.weights.column(k), m.intercepts[k]))
            }
        }
    }
}

/// `wᵀx + b` with the task's column for multi-task models.
pub fn predict_linear(model: &LinearModel, task: Option<&TaskId>, x: &[f64]) -> Result<f64, SparseError> {
    let (w, b) = model.coefficients(task)?;
    if w.len() != x.len() {
        return Err(SparseError::Shape(format!("{} features, model has {}", x.len(), w.len())));
    }
    Ok(dot(&w, x) + b)
}

/// Column means of `x` and of `y`; centered copies are returned alongside.
fn center(x: &Matrix, y: &[f64]) -> (Matrix, Vec<f64>, Vec<f64>, f64) {
    let m = x.rows() as f64;
    let means: Vec<f64> = (0..x.cols())
        .map(|j| (0..x.rows()).map(|i| x[(i, j)]).sum::<f64>() / m)
        .collect();
    let y_mean = y.iter().sum::<f64>() / m;
    let xc = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - means[j]);
    let yc = y.iter().map(|v| v - y_mean).collect();
    (xc, yc, means, y_mean)
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<(), SparseError> {
    if x.rows() != y.len() {
        return Err(SparseError::Shape(format!("{} rows but {} targets", x.rows(), y.len())));
    }
    if y.len() < 2 {
        return Err(SparseError::TooFewSamples(y.len()));
    }
    if !x.is_finite() {
        return Err(SparseError::NonFinite("features"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SparseError::NonFinite("targets"));
    }
    Ok(())
}

fn check_lambda(l: f64) -> Result<(), SparseError> {
    if l.is_finite() && l >= 0.0 {
        Ok(())
    } else {
        Err(SparseError::InvalidLambda(l))
    }
}
