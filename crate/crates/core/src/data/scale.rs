use serde::{Deserialize, Serialize};

/// Per-dimension mean imputation and z-scoring, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    /// Population standard deviation of the imputed training column; zero
    /// for constant columns.
    pub stds: Vec<f64>,
}

const CONSTANT_EPS: f64 = 1e-12;

impl Scaler {
    /// Fits on rows with possibly missing entries. A column with no observed
    /// value gets mean 0 and is treated as constant.
    ///
    /// Panics if `rows` is empty.
    pub fn fit<R: AsRef<[Option<f64>]>>(rows: &[R]) -> Scaler {
        assert!(!rows.is_empty(), "scaler needs at least one training row");
        let dim = rows[0].as_ref().len();
        let mut means = vec![0.0; dim];
        let mut stds = vec![0.0; dim];
        for j in 0..dim {
            let observed: Vec<f64> = rows.iter().filter_map(|r| r.as_ref()[j]).collect();
            if observed.is_empty() {
                continue;
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            // imputed entries sit at the mean and contribute zero deviation
            let ss: f64 = observed.iter().map(|v| (v - mean).powi(2)).sum();
            let sd = (ss / rows.len() as f64).sqrt();
            means[j] = mean;
            stds[j] = if sd > CONSTANT_EPS * (1.0 + mean.abs()) {
                sd
            } else {
                0.0
            };
        }
        Scaler { means, stds }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Fills missing entries with the training mean, leaving scale untouched.
    pub fn impute(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .map(|(v, m)| v.unwrap_or(*m))
            .collect()
    }

    pub fn transform(&self, row: &[Option<f64>]) -> Vec<f64> {
        self.transform_dense(&self.impute(row))
    }

    pub fn transform_dense(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

/// Fits a [`Scaler`] on `train` and applies it to `apply_to`.
pub fn standardize<R: AsRef<[Option<f64>]>>(train: &[R], apply_to: &[R]) -> (Vec<Vec<f64>>, Scaler) {
    let scaler = Scaler::fit(train);
    let out = apply_to
        .iter()
        .map(|r| scaler.transform(r.as_ref()))
        .collect();
    (out, scaler)
}
