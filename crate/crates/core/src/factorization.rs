//! Collective matrix factorization of the task × pair score matrix jointly
//! with the pair × feature matrix, sharing the pair factors. Fitted by
//! alternating least squares.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LangPair, TaskId};
use crate::numerics::{cholesky, dot, Matrix, NumericsError};

#[derive(Debug, Error)]
pub enum CmfError {
    #[error("no observed scores")]
    NoObservations,
    #[error("latent dimension {d} exceeds min(tasks, pairs) = {max}")]
    LatentTooLarge { d: usize, max: usize },
    #[error("latent dimension must be positive")]
    ZeroLatent,
    #[error("observation references pair {0}->{1} without a feature row")]
    UnknownPair(String, String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("feature factors are degenerate (side information weight was 0)")]
    NoSideInformation,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmfConfig {
    pub d: usize,
    pub reg: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub restarts: usize,
    /// Stop early once a sweep lowers the objective by less than this
    /// fraction.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for CmfConfig {
    fn default() -> Self {
        CmfConfig {
            d: 5,
            reg: 0.1,
            alpha: 0.5,
            sweeps: 200,
            restarts: 3,
            rel_tol: 1e-10,
            seed: 0,
        }
    }
}

/// One observed score `Y[task, pair]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub task: TaskId,
    pub pair: LangPair,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmfModel {
    pub t: Matrix,
    pub l: Matrix,
    pub f: Matrix,
    pub tasks: Vec<TaskId>,
    pub pairs: Vec<LangPair>,
    pub d: usize,
    pub reg: f64,
    pub alpha: f64,
    /// Objective at initialization and after every block update of the
    /// winning restart.
    pub history: Vec<f64>,
}

impl CmfModel {
    pub fn task_index(&self, task: &TaskId) -> Result<usize, CmfError> {
        self.tasks
            .iter()
            .position(|t| t == task)
            .ok_or_else(|| CmfError::UnknownTask(task.to_string()))
    }

    pub fn pair_index(&self, pair: &LangPair) -> Option<usize> {
        self.pairs.iter().position(|p| p == pair)
    }

    /// `T_task · factor` for an arbitrary pair factor.
    pub fn predict_factor(&self, task: &TaskId, factor: &[f64]) -> Result<f64, CmfError> {
        let k = self.task_index(task)?;
        Ok(dot(self.t.row(k), factor))
    }

    pub fn objective(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::NAN)
    }
}

/// `(T Lᵀ)` entry for a known pair.
pub fn predict_cmf(m: &CmfModel, task: &TaskId, pair: &LangPair) -> Result<f64, CmfError> {
    let p = m
        .pair_index(pair)
        .ok_or_else(|| CmfError::UnknownPair(pair.0.to_string(), pair.1.to_string()))?;
    m.predict_factor(task, m.l.row(p))
}

/// Pair factor for an unseen pair from its features alone:
/// `argmin_l α‖x − F l‖² + reg‖l‖²`.
pub fn fold_in_pair(m: &CmfModel, x_new: &[f64]) -> Result<Vec<f64>, CmfError> {
    if x_new.len() != m.f.rows() {
        return Err(CmfError::Shape(format!("{} features, model has {}", x_new.len(), m.f.rows())));
    }
    if m.alpha == 0.0 || m.f.frobenius_sq() == 0.0 {
        return Err(CmfError::NoSideInformation);
    }
    let mut a = m.f.transpose().matmul(&m.f)?;
    scale(&mut a, m.alpha);
    a.add_diagonal(m.reg);
    let mut b = m.f.tr_matvec(x_new)?;
    b.iter_mut().for_each(|v| *v *= m.alpha);
    Ok(cholesky(&a, 0.0)?.solve(&b))
}

/// `x` holds one feature row per entry of `pairs`.
pub fn fit_cmf(obs: &[Observation], pairs: &[LangPair], x: &Matrix, cfg: &CmfConfig) -> Result<CmfModel, CmfError> {
    if obs.is_empty() {
        return Err(CmfError::NoObservations);
    }
    if cfg.d == 0 {
        return Err(CmfError::ZeroLatent);
    }
    if x.rows() != pairs.len() {
        return Err(CmfError::Shape(format!("{} feature rows for {} pairs", x.rows(), pairs.len())));
    }
    if !x.is_finite() {
        return Err(CmfError::NonFinite("features"));
    }
    let pair_idx: BTreeMap<&LangPair, usize> = pairs.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let tasks: Vec<TaskId> = obs
        .iter()
        .map(|o| o.task.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let max = tasks.len().min(pairs.len());
    if cfg.d > max {
        return Err(CmfError::LatentTooLarge { d: cfg.d, max });
    }
    let mut cells = Vec::with_capacity(obs.len());
    for o in obs {
        if !o.value.is_finite() {
            return Err(CmfError::NonFinite("scores"));
        }
        let p = *pair_idx
            .get(&o.pair)
            .ok_or_else(|| CmfError::UnknownPair(o.pair.0.to_string(), o.pair.1.to_string()))?;
        let t = tasks.binary_search(&o.task).unwrap();
        cells.push((t, p, o.value));
    }
    let problem = Problem {
        cells,
        x,
        n_tasks: tasks.len(),
        cfg,
    };
    let mut best: Option<(Matrix, Matrix, Matrix, Vec<f64>)> = None;
    for r in 0..cfg.restarts.max(1) {
        let fit = problem.run(cfg.seed.wrapping_add(r as u64))?;
        if best.as_ref().map_or(true, |b| fit.3.last() < b.3.last()) {
            best = Some(fit);
        }
    }
    let (t, l, f, history) = best.unwrap();
    Ok(CmfModel {
        t,
        l,
        f,
        tasks,
        pairs: pairs.to_vec(),
        d: cfg.d,
        reg: cfg.reg,
        alpha: cfg.alpha,
        history,
    })
}

struct Problem<'a> {
    cells: Vec<(usize, usize, f64)>,
    x: &'a Matrix,
    n_tasks: usize,
    cfg: &'a CmfConfig,
}

impl Problem<'_> {
    fn objective(&self, t: &Matrix, l: &Matrix, f: &Matrix) -> f64 {
        let fit: f64 = self
            .cells
            .iter()
            .map(|&(ti, pi, y)| (y - dot(t.row(ti), l.row(pi))).powi(2))
            .sum();
        let side: f64 = if self.cfg.alpha == 0.0 {
            0.0
        } else {
            (0..self.x.rows())
                .flat_map(|p| (0..self.x.cols()).map(move |j| (p, j)))
                .map(|(p, j)| (self.x[(p, j)] - dot(l.row(p), f.row(j))).powi(2))
                .sum()
        };
        fit + self.cfg.alpha * side + self.cfg.reg * (t.frobenius_sq() + l.frobenius_sq() + f.frobenius_sq())
    }

    fn run(&self, seed: u64) -> Result<(Matrix, Matrix, Matrix, Vec<f64>), CmfError> {
        let d = self.cfg.d;
        let (m, n) = (self.x.rows(), self.x.cols());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows| Matrix::from_fn(rows, d, |_, _| rng.gen_range(-0.1..=0.1));
        let mut t = init(self.n_tasks);
        let mut l = init(m);
        let mut f = init(n);
        let mut history = vec![self.objective(&t, &l, &f)];
        let mut by_task: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_tasks];
        let mut by_pair: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for &(ti, pi, y) in &self.cells {
            by_task[ti].push((pi, y));
            by_pair[pi].push((ti, y));
        }
        for _ in 0..self.cfg.sweeps {
            let before = *history.last().unwrap();
            for (ti, row) in by_task.iter().enumerate() {
                let sol = self.ridge(row.iter().map(|&(p, y)| (l.row(p), y)), None)?;
                t.row_mut(ti).copy_from_slice(&sol);
            }
            history.push(self.objective(&t, &l, &f));
            let ftf = {
                let mut a = f.transpose().matmul(&f)?;
                scale(&mut a, self.cfg.alpha);
                a
            };
            for (pi, row) in by_pair.iter().enumerate() {
                let side = (self.cfg.alpha != 0.0).then(|| {
                    let mut b = f.tr_matvec(self.x.row(pi)).unwrap();
                    b.iter_mut().for_each(|v| *v *= self.cfg.alpha);
                    (&ftf, b)
                });
                let sol = self.ridge(row.iter().map(|&(ti, y)| (t.row(ti), y)), side)?;
                l.row_mut(pi).copy_from_slice(&sol);
            }
            history.push(self.objective(&t, &l, &f));
            let mut ltl = l.transpose().matmul(&l)?;
            scale(&mut ltl, self.cfg.alpha);
            ltl.add_diagonal(self.cfg.reg);
            let chol = cholesky(&ltl, 0.0)?;
            for j in 0..n {
                let mut b = l.tr_matvec(&self.x.column(j))?;
                b.iter_mut().for_each(|v| *v *= self.cfg.alpha);
                f.row_mut(j).copy_from_slice(&chol.solve(&b));
            }
            let after = self.objective(&t, &l, &f);
            history.push(after);
            if before - after <= self.cfg.rel_tol * before.abs() {
                break;
            }
        }
        Ok((t, l, f, history))
    }

    /// Solves `(Σ v vᵀ + extra + reg I) s = Σ y v + extra_b`.
    fn ridge<'a>(
        &self,
        terms: impl Iterator<Item = (&'a [f64], f64)>,
        extra: Option<(&Matrix, Vec<f64>)>,
    ) -> Result<Vec<f64>, CmfError> {
        let d = self.cfg.d;
        let mut a = Matrix::zeros(d, d);
        let mut b = vec![0.0; d];
        for (v, y) in terms {
            for i in 0..d {
                b[i] += y * v[i];
                for k in 0..d {
                    a[(i, k)] += v[i] * v[k];
                }
            }
        }
        if let Some((ea, eb)) = extra {
            for i in 0..d {
                b[i] += eb[i];
                for k in 0..d {
                    a[(i, k)] += ea[(i, k)];
                }
            }
        }
        a.add_diagonal(self.cfg.reg);
        Ok(cholesky(&a, 0.0)?.solve(&b))
    }
}

fn scale(a: &mut Matrix, s: f64) {
    a.as_mut_slice().iter_mut().for_each(|v| *v *= s);
}
