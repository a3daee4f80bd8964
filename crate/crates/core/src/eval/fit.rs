use std::collections::{BTreeMap, BTreeSet};

use crate::baselines::{fit_gbt, predict_aat, predict_awt, predict_gbt, TreeEnsemble};
use crate::data::{Dataset, LangId, LangPair, PerformanceRecord, Scaler, TaskData, TaskId, NUM_FEATURES};
use crate::factorization::{fit_cmf, fold_in_pair, predict_cmf, CmfModel, Observation};
use crate::gp::{fit_gp, GpState};
use crate::meta::{self, adapt, meta_train};
use crate::numerics::{Matrix, MlpParams};
use crate::sparse::{fit_group_lasso, fit_lasso, GroupLassoModel, LassoModel, LinearModel};

use super::{ModelError, ModelKind, ModelSpec};

/// One prediction request: the task, the language pair and its raw features.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub task: &'a TaskId,
    pub pivot: &'a LangId,
    pub target: &'a LangId,
    pub features: &'a [Option<f64>; NUM_FEATURES],
}

/// A model fitted on one training fold.
#[derive(Debug, Clone)]
pub enum Fitted {
    Awt(Dataset),
    Aat(Dataset),
    Lasso { model: LassoModel, scaler: Scaler },
    GroupLasso { model: GroupLassoModel, scaler: Scaler },
    Gbt { model: TreeEnsemble, scaler: Scaler },
    /// Factorizes per-task centered scores; `task_means` are added back.
    Cmf {
        model: CmfModel,
        scaler: Scaler,
        task_means: BTreeMap<TaskId, f64>,
    },
    Gp { state: GpState, scaler: Scaler },
    Maml { params: MlpParams, scaler: Scaler },
}

/// The records a model of `kind` may read when evaluated on `task`.
pub fn training_rows<'a>(train: &'a Dataset, task: &TaskId, kind: ModelKind) -> Vec<&'a PerformanceRecord> {
    train
        .records
        .iter()
        .filter(|r| kind.uses_helpers() || &r.task == task)
        .collect()
}

fn feature_rows<'a>(
    train: &'a Dataset,
    rows: &[&PerformanceRecord],
) -> Result<Vec<&'a [Option<f64>; NUM_FEATURES]>, ModelError> {
    rows.iter()
        .map(|r| {
            train
                .feature_row(&r.pivot, &r.target)
                .map(|f| f.values())
                .ok_or_else(|| ModelError::MissingFeatures(r.pivot.to_string(), r.target.to_string()))
        })
        .collect()
}

/// Per-task design matrices in task order, transformed by `f`.
fn task_data(
    rows: &[&PerformanceRecord],
    feats: &[&[Option<f64>; NUM_FEATURES]],
    f: impl Fn(&[Option<f64>]) -> Vec<f64>,
) -> Vec<TaskData> {
    let mut by_task: BTreeMap<&TaskId, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for (r, x) in rows.iter().zip(feats) {
        let e = by_task.entry(&r.task).or_default();
        e.0.push(f(&x[..]));
        e.1.push(r.score);
    }
    by_task
        .into_iter()
        .map(|(task, (xs, y))| TaskData {
            task: task.clone(),
            x: Matrix::from_rows(&xs).expect("rows share the feature width"),
            y,
        })
        .collect()
}

/// Fits `spec` on `train` for predictions on `task`.
pub fn fit_model(train: &Dataset, spec: &ModelSpec, task: &TaskId) -> Result<Fitted, ModelError> {
    let rows = training_rows(train, task, spec.kind);
    if !rows.iter().any(|r| &r.task == task) {
        return Err(ModelError::NoTrainingData(task.to_string()));
    }
    match spec.kind {
        ModelKind::Awt => return Ok(Fitted::Awt(train.with_records(rows.into_iter().cloned().collect()))),
        ModelKind::Aat => return Ok(Fitted::Aat(train.with_records(rows.into_iter().cloned().collect()))),
        _ => {}
    }
    let feats = feature_rows(train, &rows)?;
    let scaler = Scaler::fit(&feats.iter().map(|f| &f[..]).collect::<Vec<_>>());
    let standardized = |r: &[Option<f64>]| scaler.transform(r);
    Ok(match spec.kind {
        ModelKind::Awt | ModelKind::Aat => unreachable!(),
        ModelKind::Lasso => {
            let d = task_data(&rows, &feats, standardized).remove(0);
            Fitted::Lasso {
                model: fit_lasso(&d.x, &d.y, &spec.lasso_config())?,
                scaler,
            }
        }
        ModelKind::Gbt => {
            let d = task_data(&rows, &feats, |r| scaler.impute(r)).remove(0);
            Fitted::Gbt {
                model: fit_gbt(&d.x, &d.y, &spec.gbt_config())?,
                scaler,
            }
        }
        ModelKind::GroupLasso => {
            let data = task_data(&rows, &feats, standardized);
            Fitted::GroupLasso {
                model: fit_group_lasso(&data, &spec.group_lasso_config())?,
                scaler,
            }
        }
        ModelKind::Dgpr | ModelKind::Mdgpr => {
            let mut data = task_data(&rows, &feats, standardized);
            // helper tasks with a single point carry no covariance signal
            data.retain(|d| &d.task == task || d.y.len() >= 2);
            Fitted::Gp {
                state: fit_gp(&data, &spec.gp_config())?,
                scaler,
            }
        }
        ModelKind::Maml => {
            let data = task_data(&rows, &feats, standardized);
            let cfg = spec.maml_config();
            let episodes: Vec<TaskData> = data.iter().filter(|d| d.y.len() >= 2).cloned().collect();
            let theta = meta_train(&episodes, &cfg)?;
            let own = data.iter().find(|d| &d.task == task).expect("eval task present");
            Fitted::Maml {
                params: adapt(&theta, &own.x, &own.y, &cfg)?,
                scaler,
            }
        }
        ModelKind::Cmf => {
            let mut sums: BTreeMap<TaskId, (f64, usize)> = BTreeMap::new();
            for r in &rows {
                let e = sums.entry(r.task.clone()).or_default();
                e.0 += r.score;
                e.1 += 1;
            }
            let task_means: BTreeMap<TaskId, f64> = sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect();
            let mut pairs: BTreeSet<LangPair> = BTreeSet::new();
            let mut obs = Vec::with_capacity(rows.len());
            for r in &rows {
                pairs.insert(r.pair());
                obs.push(Observation {
                    task: r.task.clone(),
                    pair: r.pair(),
                    value: r.score - task_means[&r.task],
                });
            }
            let pairs: Vec<LangPair> = pairs.into_iter().collect();
            let xs: Vec<Vec<f64>> = pairs
                .iter()
                .map(|(p, t)| scaler.transform(&train.feature_row(p, t).expect("checked above").values()[..]))
                .collect();
            let x = Matrix::from_rows(&xs).expect("rows share the feature width");
            let n_tasks = task_means.len();
            let mut cfg = spec.cmf_config();
            let cap = n_tasks.min(pairs.len()).max(1);
            if cfg.d > cap {
                log::debug!("CMF latent dimension {} clamped to {cap}", cfg.d);
                cfg.d = cap;
            }
            Fitted::Cmf {
                model: fit_cmf(&obs, &pairs, &x, &cfg)?,
                scaler,
                task_means,
            }
        }
    })
}

impl Fitted {
    pub fn predict(&self, q: &Query) -> Result<f64, ModelError> {
        Ok(match self {
            Fitted::Awt(train) => predict_awt(train, q.task, q.pivot, q.target)?,
            Fitted::Aat(train) => predict_aat(train, q.task, q.pivot, q.target)?,
            Fitted::Lasso { model, scaler } => model.predict(&scaler.transform(q.features)),
            Fitted::GroupLasso { model, scaler } => model.predict(q.task, &scaler.transform(q.features))?,
            Fitted::Gbt { model, scaler } => predict_gbt(model, &scaler.impute(q.features))?,
            Fitted::Gp { state, scaler } => state.predict(&scaler.transform(q.features), q.task)?.0,
            Fitted::Maml { params, scaler } => meta::predict(params, &scaler.transform(q.features))?,
            Fitted::Cmf {
                model,
                scaler,
                task_means,
            } => {
                let pair = (q.pivot.clone(), q.target.clone());
                let centered = if model.pair_index(&pair).is_some() {
                    predict_cmf(model, q.task, &pair)?
                } else {
                    let l = fold_in_pair(model, &scaler.transform(q.features))?;
                    model.predict_factor(q.task, &l)?
                };
                task_means.get(q.task).copied().unwrap_or(0.0) + centered
            }
        })
    }

    /// The linear model and its input scaler, for linear kinds.
    pub fn linear(&self) -> Option<(LinearModel, &Scaler)> {
        match self {
            Fitted::Lasso { model, scaler } => Some((LinearModel::Lasso(model.clone()), scaler)),
            Fitted::GroupLasso { model, scaler } => Some((LinearModel::GroupLasso(model.clone()), scaler)),
            _ => None,
        }
    }
}
