//! First-order MAML: learns a network initialization that fits a new task
//! after a few gradient steps on that task's data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TaskData;
use crate::numerics::{mlp_backward, mlp_forward, Matrix, MlpGrads, MlpParams, NumericsError};

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("task {task} has {count} points, need at least 2 to split")]
    TaskTooSmall { task: String, count: usize },
    #[error("no tasks to meta-train on")]
    NoTasks,
    #[error("empty support set")]
    EmptySupport,
    #[error("second-order MAML is not supported")]
    SecondOrder,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MamlConfig {
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub meta_epochs: usize,
    /// Hidden widths; the network is `(n, hidden.., 1)`.
    pub hidden: Vec<usize>,
    pub first_order: bool,
    pub seed: u64,
}

impl Default for MamlConfig {
    fn default() -> Self {
        MamlConfig {
            inner_steps: 5,
            inner_lr: 0.01,
            outer_lr: 0.001,
            meta_epochs: 500,
            hidden: vec![50, 10],
            first_order: true,
            seed: 0,
        }
    }
}

impl MamlConfig {
    fn validate(&self) -> Result<(), MetaError> {
        if !self.first_order {
            return Err(MetaError::SecondOrder);
        }
        for (name, v) in [("inner_lr", self.inner_lr), ("outer_lr", self.outer_lr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MetaError::Config(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self, n_inputs: usize) -> Vec<usize> {
        let mut s = vec![n_inputs];
        s.extend(&self.hidden);
        s.push(1);
        s
    }
}

/// One support/query split of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support_x: Matrix,
    pub support_y: Vec<f64>,
    pub query_x: Matrix,
    pub query_y: Vec<f64>,
}

/// Mean squared error of a scalar-output network and its gradient.
pub fn mse_grad(p: &MlpParams, x: &Matrix, y: &[f64]) -> Result<(f64, MlpGrads), MetaError> {
    let m = y.len() as f64;
    let mut loss = 0.0;
    let mut grads = MlpGrads::zeros_like(p);
    for (i, &yi) in y.iter().enumerate() {
        let r = mlp_forward(p, x.row(i))?[0] - yi;
        loss += r * r / m;
        let (g, _) = mlp_backward(p, x.row(i), &[2.0 * r / m])?;
        grads.accumulate(&g, 1.0);
    }
    Ok((loss, grads))
}

pub fn predict(p: &MlpParams, x: &[f64]) -> Result<f64, MetaError> {
    Ok(mlp_forward(p, x)?[0])
}

/// `inner_steps` full-batch gradient steps on the support MSE, starting from
/// a copy of `theta`.
pub fn adapt(theta: &MlpParams, x: &Matrix, y: &[f64], cfg: &MamlConfig) -> Result<MlpParams, MetaError> {
    if y.is_empty() {
        return Err(MetaError::EmptySupport);
    }
    if x.rows() != y.len() {
        return Err(NumericsError::Shape(format!("{} rows for {} targets", x.rows(), y.len())).into());
    }
    let mut p = theta.clone();
    for _ in 0..cfg.inner_steps {
        let (_, g) = mse_grad(&p, x, y)?;
        p.add_scaled(&g, -cfg.inner_lr);
    }
    Ok(p)
}

/// First-order meta-gradient: the query-loss gradient at each task's adapted
/// parameters, averaged over episodes.
pub fn meta_gradient(theta: &MlpParams, episodes: &[Episode], cfg: &MamlConfig) -> Result<MlpGrads, MetaError> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(MetaError::NoTasks);
    }
    let mut total = MlpGrads::zeros_like(theta);
    for e in episodes {
        let adapted = adapt(theta, &e.support_x, &e.support_y, cfg)?;
        let (_, g) = mse_grad(&adapted, &e.query_x, &e.query_y)?;
        total.accumulate(&g, 1.0 / episodes.len() as f64);
    }
    Ok(total)
}

/// Random half/half split of a task; the support gets the smaller half.
pub fn split_episode(d: &TaskData, rng: &mut ChaCha8Rng) -> Result<Episode, MetaError> {
    let m = d.y.len();
    if m < 2 {
        return Err(MetaError::TaskTooSmall {
            task: d.task.to_string(),
            count: m,
        });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let (s, q) = idx.split_at(m / 2);
    let take = |rows: &[usize]| {
        let x = Matrix::from_fn(rows.len(), d.x.cols(), |i, j| d.x[(rows[i], j)]);
        let y = rows.iter().map(|&i| d.y[i]).collect();
        (x, y)
    };
    let (support_x, support_y) = take(s);
    let (query_x, query_y) = take(q);
    Ok(Episode {
        support_x,
        support_y,
        query_x,
        query_y,
    })
}

/// Meta-trains an initialization over `tasks`. Every epoch re-splits each
/// task with a generator seeded by `(seed, epoch)`.
pub fn meta_train(tasks: &[TaskData], cfg: &MamlConfig) -> Result<MlpParams, MetaError> {
    cfg.validate()?;
    let first = tasks.first().ok_or(MetaError::NoTasks)?;
    let theta = MlpParams::init(&cfg.layer_sizes(first.x.cols()), cfg.seed)?;
    meta_train_from(theta, tasks, cfg)
}

/// [`meta_train`] from a given initialization.
pub fn meta_train_from(mut theta: MlpParams, tasks: &[TaskData], cfg: &MamlConfig) -> Result<MlpParams, MetaError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(MetaError::NoTasks);
    }
    for epoch in 0..cfg.meta_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let episodes = tasks
            .iter()
            .map(|d| split_episode(d, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let g = meta_gradient(&theta, &episodes, cfg)?;
        theta.add_scaled(&g, -cfg.outer_lr);
    }
    Ok(theta)
}
