//! Deep-kernel Gaussian process regression. Inputs pass through an MLP
//! feature map `g`, an RBF kernel acts on `g(x)`, and in the multi-task
//! variant the kernel is multiplied by a learned task covariance
//! `K_task = A·Aᵀ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{TaskData, TaskId};
use crate::numerics::{
    cholesky, mlp_backward, mlp_forward, sq_dist, Cholesky, Matrix, MlpGrads, MlpParams, NumericsError,
    DEFAULT_JITTER,
};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("lengthscale must be positive, got {0}")]
    BadLengthscale(f64),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task} has {count} points, need at least 2")]
    TooFewPoints { task: String, count: usize },
    #[error("no tasks to fit")]
    NoTasks,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub fn kernel_rbf(a: &[f64], b: &[f64], lengthscale: f64, signal_variance: f64) -> Result<f64, GpError> {
    if !(lengthscale > 0.0) {
        return Err(GpError::BadLengthscale(lengthscale));
    }
    if a.len() != b.len() {
        return Err(GpError::Shape(format!("{} vs {} dimensions", a.len(), b.len())));
    }
    Ok(signal_variance * (-sq_dist(a, b) / (2.0 * lengthscale * lengthscale)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub multi_task: bool,
    pub lr: f64,
    pub epochs: usize,
    /// Hidden widths of the feature network; the last is the dimension of `g`.
    pub hidden: Vec<usize>,
    /// Noise variance is `noise_floor + exp(log_noise)`.
    pub noise_floor: f64,
    pub init_noise: f64,
    pub jitter: f64,
    /// Halvings of the step tried before an epoch is abandoned.
    pub max_backoff: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            multi_task: true,
            lr: 0.01,
            epochs: 200,
            hidden: vec![50, 10],
            noise_floor: 1e-6,
            init_noise: 0.01,
            jitter: DEFAULT_JITTER,
            max_backoff: 20,
            seed: 0,
        }
    }
}

/// Trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub mlp: MlpParams,
    pub log_lengthscale: f64,
    /// Log of the RBF signal variance.
    pub log_signal: f64,
    /// One entry per task.
    pub log_noise: Vec<f64>,
    /// Square root of the task covariance.
    pub a: Matrix,
    /// Whether `a` is trained (multi-task) or held fixed.
    pub learn_task_matrix: bool,
}

impl GpParams {
    pub fn init(n_inputs: usize, n_tasks: usize, cfg: &GpConfig) -> Result<GpParams, GpError> {
        let mut sizes = vec![n_inputs];
        sizes.extend(&cfg.hidden);
        Ok(GpParams {
            mlp: MlpParams::init(&sizes, cfg.seed)?,
            log_lengthscale: 0.0,
            log_signal: 0.0,
            log_noise: vec![(cfg.init_noise - cfg.noise_floor).max(1e-300).ln(); n_tasks],
            a: Matrix::identity(n_tasks),
            learn_task_matrix: cfg.multi_task,
        })
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal.exp()
    }

    pub fn task_covariance(&self) -> Matrix {
        self.a.matmul(&self.a.transpose()).expect("square task root")
    }

    /// Trainable values in a fixed order: network, lengthscale, signal,
    /// noises, then `a` when it is trained.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mlp.to_flat();
        v.push(self.log_lengthscale);
        v.push(self.log_signal);
        v.extend(&self.log_noise);
        if self.learn_task_matrix {
            v.extend_from_slice(self.a.as_slice());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), GpError> {
        let nm = self.mlp.num_params();
        let nt = self.log_noise.len();
        let expected = nm + 2 + nt + if self.learn_task_matrix { nt * nt } else { 0 };
        if flat.len() != expected {
            return Err(GpError::Shape(format!("{} values for {expected} parameters", flat.len())));
        }
        self.mlp.set_flat(&flat[..nm])?;
        self.log_lengthscale = flat[nm];
        self.log_signal = flat[nm + 1];
        self.log_noise.copy_from_slice(&flat[nm + 2..nm + 2 + nt]);
        if self.learn_task_matrix {
            self.a.as_mut_slice().copy_from_slice(&flat[nm + 2 + nt..]);
        }
        Ok(())
    }
}

/// Training points flattened across tasks, with per-task centered targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpData {
    pub tasks: Vec<TaskId>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub task_of: Vec<usize>,
    pub task_means: Vec<f64>,
}

impl GpData {
    pub fn new(data: &[TaskData]) -> Result<GpData, GpError> {
        let first = data.first().ok_or(GpError::NoTasks)?;
        let n = first.x.cols();
        let mut out = GpData {
            tasks: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            task_of: Vec::new(),
            task_means: Vec::new(),
        };
        for (k, d) in data.iter().enumerate() {
            if d.y.len() < 2 {
                return Err(GpError::TooFewPoints {
                    task: d.task.to_string(),
                    count: d.y.len(),
                });
            }
            if d.x.cols() != n || d.x.rows() != d.y.len() {
                return Err(GpError::Shape(format!("task {} data", d.task)));
            }
            let mean = d.y.iter().sum::<f64>() / d.y.len() as f64;
            out.tasks.push(d.task.clone());
            out.task_means.push(mean);
            for i in 0..d.y.len() {
                out.x.push(d.x.row(i).to_vec());
                out.y.push(d.y[i] - mean);
                out.task_of.push(k);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Fitted GP: parameters, training data, and the cached factorization of
/// the training covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpState {
    pub params: GpParams,
    pub data: GpData,
    pub noise_floor: f64,
    pub jitter: f64,
    /// Marginal log-likelihood at initialization and after every epoch.
    pub history: Vec<f64>,
    #[serde(skip)]
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    g: Vec<Vec<f64>>,
    chol: Cholesky,
    alpha: Vec<f64>,
    k_task: Matrix,
}

struct Evaluation {
    mll: f64,
    g: Vec<Vec<f64>>,
    rbf: Matrix,
    k_task: Matrix,
    chol: Cholesky,
    alpha: Vec<f64>,
}

fn evaluate(p: &GpParams, d: &GpData, floor: f64, jitter: f64) -> Result<Evaluation, GpError> {
    let g = d
        .x
        .iter()
        .map(|x| mlp_forward(&p.mlp, x))
        .collect::<Result<Vec<_>, _>>()?;
    let m = d.len();
    let ls = p.lengthscale();
    let sig = p.signal_variance();
    let k_task = p.task_covariance();
    let rbf = Matrix::from_fn(m, m, |i, j| (-sq_dist(&g[i], &g[j]) / (2.0 * ls * ls)).exp());
    let mut k = Matrix::from_fn(m, m, |i, j| sig * rbf[(i, j)] * k_task[(d.task_of[i], d.task_of[j])]);
    for i in 0..m {
        k[(i, i)] += floor + p.log_noise[d.task_of[i]].exp();
    }
    if !k.is_finite() {
        return Err(NumericsError::NonFinite("GP covariance").into());
    }
    let chol = cholesky(&k, jitter)?;
    let alpha = chol.solve(&d.y);
    let fit: f64 = d.y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let mll = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(Evaluation {
        mll,
        g,
        rbf,
        k_task,
        chol,
        alpha,
    })
}

/// Exact marginal log-likelihood of the centered targets.
pub fn marginal_log_likelihood(p: &GpParams, d: &GpData, noise_floor: f64, jitter: f64) -> Result<f64, GpError> {
    Ok(evaluate(p, d, noise_floor, jitter)?.mll)
}

/// Marginal log-likelihood and its gradient, laid out as
/// [`GpParams::to_flat`].
pub fn mll_gradient(p: &GpParams, d: &GpData, noise_floor: f64, jitter: f64) -> Result<(f64, Vec<f64>), GpError> {
    let e = evaluate(p, d, noise_floor, jitter)?;
    let m = d.len();
    let nt = d.tasks.len();
    let ls2 = p.lengthscale().powi(2);
    let sig = p.signal_variance();
    // W = ααᵀ − K⁻¹, dMLL/dθ = ½ tr(W dK/dθ)
    let mut w = e.chol.inverse();
    for i in 0..m {
        for j in 0..m {
            w[(i, j)] = e.alpha[i] * e.alpha[j] - w[(i, j)];
        }
    }
    let (mut g_ls, mut g_sig) = (0.0, 0.0);
    let mut g_noise = vec![0.0; nt];
    let mut g_ktask = Matrix::zeros(nt, nt);
    let mut mlp_grads = MlpGrads::zeros_like(&p.mlp);
    let mut upstream = vec![0.0; p.mlp.output_dim()];
    for i in 0..m {
        let ti = d.task_of[i];
        upstream.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let tj = d.task_of[j];
            let kf = sig * e.rbf[(i, j)] * e.k_task[(ti, tj)];
            let wk = w[(i, j)] * kf;
            g_sig += 0.5 * wk;
            g_ls += 0.5 * wk * sq_dist(&e.g[i], &e.g[j]) / ls2;
            g_ktask[(ti, tj)] += 0.5 * w[(i, j)] * sig * e.rbf[(i, j)];
            if i != j {
                // both (i,j) and (j,i) terms depend on g_i; W and K symmetric
                for (u, (gi, gj)) in upstream.iter_mut().zip(e.g[i].iter().zip(&e.g[j])) {
                    *u += wk * (gj - gi) / ls2;
                }
            }
        }
        g_noise[ti] += 0.5 * w[(i, i)] * p.log_noise[ti].exp();
        let (gi, _) = mlp_backward(&p.mlp, &d.x[i], &upstream)?;
        mlp_grads.accumulate(&gi, 1.0);
    }
    let mut grad = mlp_grads.to_flat();
    grad.push(g_ls);
    grad.push(g_sig);
    grad.extend(g_noise);
    if p.learn_task_matrix {
        // K_task = A Aᵀ: dMLL/dA = (G + Gᵀ) A
        let mut gs = g_ktask.clone();
        for a in 0..nt {
            for b in 0..nt {
                gs[(a, b)] = g_ktask[(a, b)] + g_ktask[(b, a)];
            }
        }
        grad.extend_from_slice(gs.matmul(&p.a)?.as_slice());
    }
    Ok((e.mll, grad))
}

impl GpState {
    /// Conditions fixed parameters on training data.
    pub fn condition(params: GpParams, data: GpData, noise_floor: f64, jitter: f64) -> Result<GpState, GpError> {
        if params.log_noise.len() != data.tasks.len() || params.a.rows() != data.tasks.len() || !params.a.is_square() {
            return Err(GpError::Shape("parameters do not match the task count".into()));
        }
        let e = evaluate(&params, &data, noise_floor, jitter)?;
        Ok(GpState {
            params,
            data,
            noise_floor,
            jitter,
            history: vec![e.mll],
            cache: Some(Cache {
                g: e.g,
                chol: e.chol,
                alpha: e.alpha,
                k_task: e.k_task,
            }),
        })
    }

    pub fn task_index(&self, task: &TaskId) -> Result<usize, GpError> {
        self.data
            .tasks
            .iter()
            .position(|t| t == task)
            .ok_or_else(|| GpError::UnknownTask(task.to_string()))
    }

    fn cache(&mut self) -> Result<&Cache, GpError> {
        if self.cache.is_none() {
            let e = evaluate(&self.params, &self.data, self.noise_floor, self.jitter)?;
            self.cache = Some(Cache {
                g: e.g,
                chol: e.chol,
                alpha: e.alpha,
                k_task: e.k_task,
            });
        }
        Ok(self.cache.as_ref().unwrap())
    }

    /// Rebuilds the cached factorization, e.g. after deserialization.
    pub fn refresh(&mut self) -> Result<(), GpError> {
        self.cache = None;
        self.cache().map(|_| ())
    }

    /// `k(x_a, x_b) · K_task[a, b]` under the current parameters.
    pub fn multitask_kernel(&self, xa: &[f64], ta: &TaskId, xb: &[f64], tb: &TaskId) -> Result<f64, GpError> {
        let (a, b) = (self.task_index(ta)?, self.task_index(tb)?);
        let ga = mlp_forward(&self.params.mlp, xa)?;
        let gb = mlp_forward(&self.params.mlp, xb)?;
        let kt = self.params.task_covariance();
        Ok(kernel_rbf(&ga, &gb, self.params.lengthscale(), self.params.signal_variance())? * kt[(a, b)])
    }

    /// Predictive mean (with the task mean restored) and latent variance.
    pub fn predict(&self, x: &[f64], task: &TaskId) -> Result<(f64, f64), GpError> {
        let t = self.task_index(task)?;
        let cache = self.cache.as_ref().ok_or(GpError::Shape("state not conditioned".into()))?;
        let g = mlp_forward(&self.params.mlp, x)?;
        let ls = self.params.lengthscale();
        let sig = self.params.signal_variance();
        let kstar: Vec<f64> = cache
            .g
            .iter()
            .zip(&self.data.task_of)
            .map(|(gi, &ti)| sig * (-sq_dist(&g, gi) / (2.0 * ls * ls)).exp() * cache.k_task[(t, ti)])
            .collect();
        let mean = self.data.task_means[t] + kstar.iter().zip(&cache.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = cache.chol.solve_lower(&kstar);
        let prior = sig * cache.k_task[(t, t)];
        let var = (prior - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        Ok((mean, var))
    }
}

pub fn predict_gp(state: &GpState, x: &[f64], task: &TaskId) -> Result<(f64, f64), GpError> {
    state.predict(x, task)
}

/// Maximizes the per-point marginal log-likelihood by full-batch gradient
/// ascent with step `lr`, halving the step whenever it would lower the
/// likelihood.
pub fn fit_gp(data: &[TaskData], cfg: &GpConfig) -> Result<GpState, GpError> {
    let gd = GpData::new(data)?;
    let mut params = GpParams::init(gd.x[0].len(), gd.tasks.len(), cfg)?;
    if !cfg.multi_task && gd.tasks.len() > 1 {
        log::debug!("single-task GP over {} tasks: task covariance fixed to identity", gd.tasks.len());
    }
    let m = gd.len() as f64;
    let mut flat = params.to_flat();
    let mut cur = marginal_log_likelihood(&params, &gd, cfg.noise_floor, cfg.jitter)?;
    let mut history = vec![cur];
    let mut trial = params.clone();
    for epoch in 0..cfg.epochs {
        let (_, grad) = mll_gradient(&params, &gd, cfg.noise_floor, cfg.jitter)?;
        let mut step = cfg.lr / m;
        let mut accepted = false;
        for _ in 0..=cfg.max_backoff {
            let cand: Vec<f64> = flat.iter().zip(&grad).map(|(p, g)| p + step * g).collect();
            trial.set_flat(&cand)?;
            match marginal_log_likelihood(&trial, &gd, cfg.noise_floor, cfg.jitter) {
                Ok(v) if v.is_finite() && v >= cur => {
                    flat = cand;
                    params = trial.clone();
                    cur = v;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        history.push(cur);
        if !accepted {
            log::debug!("GP ascent stalled at epoch {epoch}");
            break;
        }
    }
    let mut state = GpState::condition(params, gd, cfg.noise_floor, cfg.jitter)?;
    state.history = history;
    Ok(state)
}
