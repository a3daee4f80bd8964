use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::GbtConfig;
use crate::factorization::CmfConfig;
use crate::gp::GpConfig;
use crate::meta::MamlConfig;
use crate::sparse::{GroupLassoConfig, LassoConfig};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Awt,
    Aat,
    Lasso,
    Gbt,
    Dgpr,
    GroupLasso,
    Cmf,
    Mdgpr,
    Maml,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Awt,
        ModelKind::Aat,
        ModelKind::Lasso,
        ModelKind::Gbt,
        ModelKind::Dgpr,
        ModelKind::GroupLasso,
        ModelKind::Cmf,
        ModelKind::Mdgpr,
        ModelKind::Maml,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Awt => "awt",
            ModelKind::Aat => "aat",
            ModelKind::Lasso => "lasso",
            ModelKind::Gbt => "gbt",
            ModelKind::Dgpr => "dgpr",
            ModelKind::GroupLasso => "group-lasso",
            ModelKind::Cmf => "cmf",
            ModelKind::Mdgpr => "mdgpr",
            ModelKind::Maml => "maml",
        }
    }

    /// Whether the model reads helper-task records.
    pub fn uses_helpers(self) -> bool {
        matches!(
            self,
            ModelKind::Aat | ModelKind::GroupLasso | ModelKind::Cmf | ModelKind::Mdgpr | ModelKind::Maml
        )
    }

    pub fn is_linear(self) -> bool {
        matches!(self, ModelKind::Lasso | ModelKind::GroupLasso)
    }

    /// Hyperparameter names with their defaults.
    pub fn defaults(self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match self {
            ModelKind::Awt | ModelKind::Aat => vec![],
            ModelKind::Lasso => {
                let c = LassoConfig::default();
                vec![("lambda", c.lambda), ("tol", c.tol), ("max_iter", c.max_iter as f64)]
            }
            ModelKind::GroupLasso => {
                let c = GroupLassoConfig::default();
                vec![
                    ("lambda_group", c.lambda_group),
                    ("lambda_l1", c.lambda_l1),
                    ("tol", c.tol),
                    ("max_iter", c.max_iter as f64),
                ]
            }
            ModelKind::Gbt => {
                let c = GbtConfig::default();
                vec![
                    ("n_estimators", c.n_estimators as f64),
                    ("max_depth", c.max_depth as f64),
                    ("learning_rate", c.learning_rate),
                ]
            }
            ModelKind::Cmf => {
                let c = CmfConfig::default();
                vec![
                    ("d", c.d as f64),
                    ("reg", c.reg),
                    ("alpha", c.alpha),
                    ("sweeps", c.sweeps as f64),
                    ("restarts", c.restarts as f64),
                ]
            }
            ModelKind::Dgpr | ModelKind::Mdgpr => {
                let c = GpConfig::default();
                vec![
                    ("lr", c.lr),
                    ("epochs", c.epochs as f64),
                    ("hidden1", c.hidden[0] as f64),
                    ("hidden2", c.hidden[1] as f64),
                    ("noise_floor", c.noise_floor),
                    ("init_noise", c.init_noise),
                ]
            }
            ModelKind::Maml => {
                let c = MamlConfig::default();
                vec![
                    ("inner_steps", c.inner_steps as f64),
                    ("inner_lr", c.inner_lr),
                    ("outer_lr", c.outer_lr),
                    ("meta_epochs", c.meta_epochs as f64),
                    ("hidden1", c.hidden[0] as f64),
                    ("hidden2", c.hidden[1] as f64),
                ]
            }
        };
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    fn integer_hyper(name: &str) -> bool {
        matches!(
            name,
            "max_iter"
                | "n_estimators"
                | "max_depth"
                | "d"
                | "sweeps"
                | "restarts"
                | "epochs"
                | "hidden1"
                | "hidden2"
                | "inner_steps"
                | "meta_epochs"
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match s.as_str() {
            "xgboost" => "gbt",
            "grouplasso" => "group-lasso",
            other => other,
        };
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == alias)
            .ok_or(EvalError::UnknownKind(s))
    }
}

/// A model kind with its complete hyperparameter map and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hyper: BTreeMap<String, f64>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, seed: u64) -> ModelSpec {
        ModelSpec {
            kind,
            hyper: kind.defaults(),
            seed,
        }
    }

    /// Overrides one hyperparameter, rejecting names the kind does not use.
    pub fn with(mut self, name: &str, value: f64) -> Result<ModelSpec, EvalError> {
        self.set(name, value)?;
        Ok(self)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), EvalError> {
        if !self.hyper.contains_key(name) {
            return Err(EvalError::UnknownHyper {
                kind: self.kind.to_string(),
                name: name.to_owned(),
            });
        }
        let bad = |msg: &str| EvalError::InvalidHyper {
            name: name.to_owned(),
            msg: msg.to_owned(),
        };
        if !value.is_finite() || value < 0.0 {
            return Err(bad("must be finite and non-negative"));
        }
        if ModelKind::integer_hyper(name) && value.fract() != 0.0 {
            return Err(bad("must be an integer"));
        }
        self.hyper.insert(name.to_owned(), value);
        Ok(())
    }

    /// Parses `kind` or `kind:name=value:name=value`.
    pub fn parse(s: &str, seed: u64) -> Result<ModelSpec, EvalError> {
        let mut parts = s.split(':');
        let kind: ModelKind = parts.next().unwrap_or_default().parse()?;
        let mut spec = ModelSpec::new(kind, seed);
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| EvalError::InvalidHyper {
                name: p.to_owned(),
                msg: "expected name=value".into(),
            })?;
            let v: f64 = v.trim().parse().map_err(|_| EvalError::InvalidHyper {
                name: k.to_owned(),
                msg: format!("not a number: {v}"),
            })?;
            spec.set(k.trim(), v)?;
        }
        Ok(spec)
    }

    pub fn get(&self, name: &str) -> f64 {
        self.hyper[name]
    }

    fn get_usize(&self, name: &str) -> usize {
        self.hyper[name] as usize
    }

    pub fn lasso_config(&self) -> LassoConfig {
        LassoConfig {
            lambda: self.get("lambda"),
            tol: self.get("tol"),
            max_iter: self.get_usize("max_iter"),
        }
    }

    pub fn group_lasso_config(&self) -> GroupLassoConfig {
        GroupLassoConfig {
            lambda_group: self.get("lambda_group"),
            lambda_l1: self.get("lambda_l1"),
            tol: self.get("tol"),
            max_iter: self.get_usize("max_iter"),
        }
    }

    pub fn gbt_config(&self) -> GbtConfig {
        GbtConfig {
            n_estimators: self.get_usize("n_estimators"),
            max_depth: self.get_usize("max_depth"),
            learning_rate: self.get("learning_rate"),
        }
    }

    pub fn cmf_config(&self) -> CmfConfig {
        CmfConfig {
            d: self.get_usize("d"),
            reg: self.get("reg"),
            alpha: self.get("alpha"),
            sweeps: self.get_usize("sweeps"),
            restarts: self.get_usize("restarts"),
            seed: self.seed,
            ..CmfConfig::default()
        }
    }

    pub fn gp_config(&self) -> GpConfig {
        GpConfig {
            multi_task: self.kind == ModelKind::Mdgpr,
            lr: self.get("lr"),
            epochs: self.get_usize("epochs"),
            hidden: vec![self.get_usize("hidden1"), self.get_usize("hidden2")],
            noise_floor: self.get("noise_floor"),
            init_noise: self.get("init_noise"),
            seed: self.seed,
            ..GpConfig::default()
        }
    }

    pub fn maml_config(&self) -> MamlConfig {
        MamlConfig {
            inner_steps: self.get_usize("inner_steps"),
            inner_lr: self.get("inner_lr"),
            outer_lr: self.get("outer_lr"),
            meta_epochs: self.get_usize("meta_epochs"),
            hidden: vec![self.get_usize("hidden1"), self.get_usize("hidden2")],
            first_order: true,
            seed: self.seed,
        }
    }
}
