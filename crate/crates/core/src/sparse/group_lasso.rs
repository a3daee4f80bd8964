use serde::{Deserialize, Serialize};

use crate::data::{TaskData, TaskId};
use crate::numerics::{dot, Matrix};

use super::{center, check_lambda, check_xy, soft_threshold, SparseError, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLassoConfig {
    pub lambda_group: f64,
    /// Elementwise ℓ1 penalty on the task weights; zero gives plain Group Lasso.
    pub lambda_l1: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GroupLassoConfig {
    fn default() -> Self {
        GroupLassoConfig {
            lambda_group: 0.01,
            lambda_l1: 0.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLassoModel {
    pub tasks: Vec<TaskId>,
    /// Feature rows by task columns; column `k` belongs to `tasks[k]`.
    pub weights: Matrix,
    pub intercepts: Vec<f64>,
    pub lambda_group: f64,
    pub lambda_l1: f64,
    /// Exponent of the row norm in the group penalty.
    pub q: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub history: Vec<f64>,
}

impl GroupLassoModel {
    pub fn from_parts(tasks: Vec<TaskId>, weights: Matrix, intercepts: Vec<f64>, lambda_group: f64) -> Self {
        GroupLassoModel {
            tasks,
            weights,
            intercepts,
            lambda_group,
            lambda_l1: 0.0,
            q: 2.0,
            converged: true,
            n_iter: 0,
            history: Vec::new(),
        }
    }

    pub fn task_index(&self, task: &TaskId) -> Result<usize, SparseError> {
        self.tasks
            .iter()
            .position(|t| t == task)
            .ok_or_else(|| SparseError::UnknownTask(task.to_string()))
    }

    pub fn row_norm(&self, j: usize) -> f64 {
        self.weights.row(j).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Feature rows with a nonzero weight in some task.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.rows()).filter(|&j| self.row_norm(j) > 0.0).collect()
    }

    pub fn predict(&self, task: &TaskId, x: &[f64]) -> Result<f64, SparseError> {
        let k = self.task_index(task)?;
        Ok(dot(&self.weights.column(k), x) + self.intercepts[k])
    }

    /// Largest violation of the optimality conditions on `data` for a model
    /// fitted without the ℓ1 term: for a nonzero row the per-task correlation
    /// vector must equal `λ·φ/‖φ‖`, for a zero row its norm must not exceed λ.
    pub fn kkt_violation(&self, data: &[TaskData]) -> Result<f64, SparseError> {
        let mut worst = 0.0f64;
        let centered: Vec<_> = data.iter().map(|d| center(&d.x, &d.y)).collect();
        let ks = data
            .iter()
            .map(|d| self.task_index(&d.task))
            .collect::<Result<Vec<_>, _>>()?;
        let resid: Vec<Vec<f64>> = centered
            .iter()
            .zip(&ks)
            .map(|((xc, yc, _, _), &k)| {
                let w = self.weights.column(k);
                (0..xc.rows()).map(|i| yc[i] - dot(xc.row(i), &w)).collect()
            })
            .collect();
        for j in 0..self.weights.rows() {
            let mut g = vec![0.0; self.tasks.len()];
            for ((xc, _, _, _), (r, &k)) in centered.iter().zip(resid.iter().zip(&ks)) {
                g[k] = (0..xc.rows()).map(|i| xc[(i, j)] * r[i]).sum::<f64>() / xc.rows() as f64;
            }
            let norm = self.row_norm(j);
            let v = if norm > 0.0 {
                g.iter()
                    .zip(self.weights.row(j))
                    .map(|(gi, wi)| (gi - self.lambda_group * wi / norm).powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                (g.iter().map(|v| v * v).sum::<f64>().sqrt() - self.lambda_group).max(0.0)
            };
            worst = worst.max(v);
        }
        Ok(worst)
    }
}

/// `Σ_t (1/2m_t)‖y_t − X_tφ_t − b_t‖² + λ_g Σ_j ‖Φ_j‖₂ + λ_1 Σ|Φ|`.
pub fn group_lasso_objective(data: &[TaskData], model: &GroupLassoModel) -> Result<f64, SparseError> {
    let mut total = 0.0;
    for d in data {
        let k = model.task_index(&d.task)?;
        let w = model.weights.column(k);
        let rss: f64 = (0..d.x.rows())
            .map(|i| (d.y[i] - dot(d.x.row(i), &w) - model.intercepts[k]).powi(2))
            .sum();
        total += rss / (2.0 * d.y.len() as f64);
    }
    Ok(total + penalty(&model.weights, model.lambda_group, model.lambda_l1))
}

fn penalty(w: &Matrix, lg: f64, l1: f64) -> f64 {
    (0..w.rows())
        .map(|j| {
            let row = w.row(j);
            lg * row.iter().map(|v| v * v).sum::<f64>().sqrt() + l1 * row.iter().map(|v| v.abs()).sum::<f64>()
        })
        .sum()
}

const INNER_STEPS: usize = 100;

/// Block coordinate descent over feature rows. Each row is moved by
/// proximal-gradient steps with step `1/L_j`, `L_j = max_t ‖x_tj‖²/m_t`;
/// when every task's column has the same scale one step is the exact row
/// minimizer.
pub fn fit_group_lasso(data: &[TaskData], cfg: &GroupLassoConfig) -> Result<GroupLassoModel, SparseError> {
    let first = data.first().ok_or(SparseError::NoTasks)?;
    let n = first.x.cols();
    for d in data {
        check_xy(&d.x, &d.y)?;
        if d.x.cols() != n {
            return Err(SparseError::Shape(format!(
                "task {} has {} features, expected {n}",
                d.task,
                d.x.cols()
            )));
        }
    }
    check_lambda(cfg.lambda_group)?;
    check_lambda(cfg.lambda_l1)?;
    let tasks: Vec<TaskId> = data.iter().map(|d| d.task.clone()).collect();
    for (i, t) in tasks.iter().enumerate() {
        if tasks[..i].contains(t) {
            return Err(SparseError::Shape(format!("task {t} given twice")));
        }
    }
    let nt = data.len();
    let centered: Vec<_> = data.iter().map(|d| center(&d.x, &d.y)).collect();
    // per-row, per-task curvature
    let curv: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            centered
                .iter()
                .map(|(xc, ..)| (0..xc.rows()).map(|i| xc[(i, j)].powi(2)).sum::<f64>() / xc.rows() as f64)
                .collect()
        })
        .collect();
    let mut w = Matrix::zeros(n, nt);
    let mut resid: Vec<Vec<f64>> = centered.iter().map(|(_, yc, ..)| yc.clone()).collect();
    let objective = |w: &Matrix, resid: &[Vec<f64>]| -> f64 {
        resid
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>() / (2.0 * r.len() as f64))
            .sum::<f64>()
            + penalty(w, cfg.lambda_group, cfg.lambda_l1)
    };
    let mut history = vec![objective(&w, &resid)];
    let mut converged = false;
    let mut n_iter = 0;
    let mut v = vec![0.0; nt];
    while n_iter < cfg.max_iter {
        n_iter += 1;
        let mut max_change = 0.0f64;
        for j in 0..n {
            let lj = curv[j].iter().copied().fold(0.0, f64::max);
            if lj == 0.0 {
                continue;
            }
            let exact = curv[j].iter().all(|c| (c - lj).abs() <= 1e-12 * lj);
            for _ in 0..INNER_STEPS {
                for (t, (xc, ..)) in centered.iter().enumerate() {
                    let m = xc.rows() as f64;
                    let corr = (0..xc.rows()).map(|i| xc[(i, j)] * resid[t][i]).sum::<f64>() / m;
                    v[t] = soft_threshold(w[(j, t)] + corr / lj, cfg.lambda_l1 / lj);
                }
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                let shrink = if norm > 0.0 {
                    (1.0 - cfg.lambda_group / (lj * norm)).max(0.0)
                } else {
                    0.0
                };
                let mut step = 0.0f64;
                for (t, (xc, ..)) in centered.iter().enumerate() {
                    let new = shrink * v[t];
                    let delta = new - w[(j, t)];
                    if delta != 0.0 {
                        for i in 0..xc.rows() {
                            resid[t][i] -= delta * xc[(i, j)];
                        }
                        w[(j, t)] = new;
                    }
                    step = step.max(delta.abs());
                }
                max_change = max_change.max(step);
                if exact || step < 0.1 * cfg.tol {
                    break;
                }
            }
        }
        history.push(objective(&w, &resid));
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("group lasso did not converge in {} sweeps", cfg.max_iter);
    }
    let intercepts = centered
        .iter()
        .enumerate()
        .map(|(t, (_, _, means, y_mean))| y_mean - dot(means, &w.column(t)))
        .collect();
    Ok(GroupLassoModel {
        tasks,
        weights: w,
        intercepts,
        lambda_group: cfg.lambda_group,
        lambda_l1: cfg.lambda_l1,
        q: 2.0,
        converged,
        n_iter,
        history,
    })
}
