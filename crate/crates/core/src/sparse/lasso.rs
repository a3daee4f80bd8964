use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

use super::{center, check_lambda, check_xy, SparseError, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda: 0.01,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Objective before the first sweep and after each sweep.
    pub history: Vec<f64>,
}

impl LassoModel {
    pub fn from_parts(weights: Vec<f64>, intercept: f64, lambda: f64) -> LassoModel {
        LassoModel {
            weights,
            intercept,
            lambda,
            converged: true,
            n_iter: 0,
            history: Vec::new(),
        }
    }

    pub fn constant(n: usize, intercept: f64) -> LassoModel {
        LassoModel::from_parts(vec![0.0; n], intercept, 0.0)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        crate::numerics::dot(&self.weights, x) + self.intercept
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/2m)‖y − Xw − b‖² + λ‖w‖₁`.
pub fn lasso_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let m = y.len() as f64;
    let rss: f64 = (0..x.rows())
        .map(|i| (y[i] - crate::numerics::dot(x.row(i), w) - b).powi(2))
        .sum();
    rss / (2.0 * m) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent on centered data with exact soft-threshold
/// coordinate updates. The intercept is recovered from the means.
pub fn fit_lasso(x: &Matrix, y: &[f64], cfg: &LassoConfig) -> Result<LassoModel, SparseError> {
    check_xy(x, y)?;
    check_lambda(cfg.lambda)?;
    let (xc, yc, means, y_mean) = center(x, y);
    let (m, n) = (x.rows(), x.cols());
    let mf = m as f64;
    let z: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| xc[(i, j)].powi(2)).sum::<f64>() / mf)
        .collect();
    let mut w = vec![0.0; n];
    let mut r = yc.clone();
    let objective = |w: &[f64]| lasso_objective(&xc, &yc, w, 0.0, cfg.lambda);
    let mut history = vec![objective(&w)];
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < cfg.max_iter {
        n_iter += 1;
        let mut max_change = 0.0f64;
        for j in 0..n {
            if z[j] == 0.0 {
                continue;
            }
            let rho = (0..m).map(|i| xc[(i, j)] * r[i]).sum::<f64>() / mf + z[j] * w[j];
            let new = soft_threshold(rho, cfg.lambda) / z[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for i in 0..m {
                    r[i] -= delta * xc[(i, j)];
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        history.push(objective(&w));
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lasso did not converge in {} sweeps", cfg.max_iter);
    }
    let intercept = y_mean - crate::numerics::dot(&means, &w);
    Ok(LassoModel {
        weights: w,
        intercept,
        lambda: cfg.lambda,
        converged,
        n_iter,
        history,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `n` centered columns of squared norm `m`, mutually orthogonal, built by
    /// Gram-Schmidt against the all-ones vector.
    pub(crate) fn orthonormal_design(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (m as f64).sqrt(); m]];
        while basis.len() < n + 1 {
            let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= p * bi;
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
        let scale = (m as f64).sqrt();
        Matrix::from_fn(m, n, |i, j| basis[j + 1][i] * scale)
    }

    #[test]
    fn exact_fit_without_penalty() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let cfg = LassoConfig {
            lambda: 0.0,
            ..LassoConfig::default()
        };
        let m = fit_lasso(&x, &[1.0, 2.0], &cfg).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
        assert!(m.converged);
    }

    #[test]
    fn full_shrinkage_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(12, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (xc, yc, _, y_mean) = center(&x, &y);
        let lmax = (0..4)
            .map(|j| (0..12).map(|i| xc[(i, j)] * yc[i]).sum::<f64>().abs() / 12.0)
            .fold(0.0, f64::max);
        let cfg = LassoConfig {
            lambda: lmax,
            ..LassoConfig::default()
        };
        let m = fit_lasso(&x, &y, &cfg).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert!((m.intercept - y_mean).abs() < 1e-15);
        let cfg = LassoConfig {
            lambda: lmax * 0.99,
            ..cfg
        };
        assert!(fit_lasso(&x, &y, &cfg).unwrap().weights.iter().any(|w| *w != 0.0));
    }

    #[test]
    fn orthonormal_design_soft_threshold_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let m = rng.gen_range(10..=32);
            let n = rng.gen_range(1..=8);
            let x = orthonormal_design(m, n, &mut rng);
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lambda = rng.gen_range(0.0..0.3);
            let fit = fit_lasso(&x, &y, &LassoConfig { lambda, ..LassoConfig::default() }).unwrap();
            for j in 0..n {
                let ols: f64 = (0..m).map(|i| x[(i, j)] * y[i]).sum::<f64>() / m as f64;
                let oracle = ols.signum() * (ols.abs() - lambda).max(0.0);
                assert!((fit.weights[j] - oracle).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn objective_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_fn(30, 6, |i, j| rng.gen_range(-1.0..1.0) + 0.3 * (i * j % 3) as f64);
        let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] - 2.0 * x[(i, 3)] + rng.gen_range(-0.1..0.1)).collect();
        let fit = fit_lasso(&x, &y, &LassoConfig { lambda: 0.05, ..LassoConfig::default() }).unwrap();
        assert!(fit.history.len() >= 2);
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let direct = lasso_objective(&x, &y, &fit.weights, fit.intercept, 0.05);
        assert!((direct - fit.history.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let x = Matrix::from_rows(&[[1.0], [f64::NAN]]).unwrap();
        assert!(matches!(fit_lasso(&x, &[1.0, 2.0], &LassoConfig::default()), Err(SparseError::NonFinite(_))));
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(fit_lasso(&x, &[1.0], &LassoConfig::default()), Err(SparseError::TooFewSamples(1)));
    }
}
