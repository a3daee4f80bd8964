use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numerics::Matrix;

/// Lowercase ISO 639 language code, optionally extended with `-subtag` parts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LangId(String);

impl LangId {
    pub fn new(code: impl Into<String>) -> Result<Self, DataError> {
        let code = code.into();
        if is_valid_lang_code(&code) {
            Ok(LangId(code))
        } else {
            Err(DataError::InvalidLang(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_valid_lang_code(code: &str) -> bool {
    let mut parts = code.split('-');
    let base = parts.next().unwrap_or("");
    if !(2..=3).contains(&base.len()) || !base.bytes().all(|b| b.is_ascii_lowercase()) {
        return false;
    }
    parts.all(|p| {
        !p.is_empty()
            && p
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
    })
}

impl fmt::Display for LangId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LangId {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LangId::new(s)
    }
}

impl TryFrom<String> for LangId {
    type Error = DataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        LangId::new(s)
    }
}

impl From<LangId> for String {
    fn from(l: LangId) -> String {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TaskId(String);

impl TaskId {
    pub fn new(name: impl Into<String>) -> Result<Self, DataError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(DataError::InvalidTask(name));
        }
        Ok(TaskId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for TaskId {
    type Error = DataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        TaskId::new(s)
    }
}

impl From<TaskId> for String {
    fn from(t: TaskId) -> String {
        t.0
    }
}

/// A directed (pivot, target) language pair.
pub type LangPair = (LangId, LangId);

/// One observed zero-shot score of `model` on `task`, fine-tuned in `pivot`
/// and evaluated on `target`. Scores live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub model: String,
    pub task: TaskId,
    pub pivot: LangId,
    pub target: LangId,
    pub score: f64,
}

impl PerformanceRecord {
    pub fn new(
        model: impl Into<String>,
        task: TaskId,
        pivot: LangId,
        target: LangId,
        score: f64,
    ) -> Result<Self, DataError> {
        if pivot == target {
            return Err(DataError::PivotEqualsTarget(pivot.to_string()));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(DataError::ScoreOutOfRange(score));
        }
        Ok(PerformanceRecord {
            model: model.into(),
            task,
            pivot,
            target,
            score,
        })
    }

    pub fn pair(&self) -> LangPair {
        (self.pivot.clone(), self.target.clone())
    }
}

/// The closed set of predictor features, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureName {
    #[serde(rename = "o_sw")]
    SubwordOverlap,
    #[serde(rename = "s_syn")]
    SyntacticSimilarity,
    #[serde(rename = "s_pho")]
    PhonologicalSimilarity,
    #[serde(rename = "s_gen")]
    GeneticSimilarity,
    #[serde(rename = "d_geo")]
    GeographicDistance,
    #[serde(rename = "size")]
    PretrainSize,
    #[serde(rename = "wmrr")]
    Wmrr,
    #[serde(rename = "fert")]
    Fertility,
    #[serde(rename = "pcw")]
    ContinuedWords,
}

pub const NUM_FEATURES: usize = 9;

impl FeatureName {
    pub const ALL: [FeatureName; NUM_FEATURES] = [
        FeatureName::SubwordOverlap,
        FeatureName::SyntacticSimilarity,
        FeatureName::PhonologicalSimilarity,
        FeatureName::GeneticSimilarity,
        FeatureName::GeographicDistance,
        FeatureName::PretrainSize,
        FeatureName::Wmrr,
        FeatureName::Fertility,
        FeatureName::ContinuedWords,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::SubwordOverlap => "o_sw",
            FeatureName::SyntacticSimilarity => "s_syn",
            FeatureName::PhonologicalSimilarity => "s_pho",
            FeatureName::GeneticSimilarity => "s_gen",
            FeatureName::GeographicDistance => "d_geo",
            FeatureName::PretrainSize => "size",
            FeatureName::Wmrr => "wmrr",
            FeatureName::Fertility => "fert",
            FeatureName::ContinuedWords => "pcw",
        }
    }

    pub fn parse(name: &str) -> Option<FeatureName> {
        FeatureName::ALL.into_iter().find(|f| f.as_str() == name)
    }

    fn check_range(self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self {
            FeatureName::SubwordOverlap
            | FeatureName::SyntacticSimilarity
            | FeatureName::PhonologicalSimilarity
            | FeatureName::GeneticSimilarity
            | FeatureName::ContinuedWords => (0.0..=1.0).contains(&v),
            FeatureName::GeographicDistance => v >= 0.0,
            FeatureName::Fertility => v >= 1.0,
            FeatureName::PretrainSize | FeatureName::Wmrr => true,
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feature values for one (pivot, target) pair. A slot holding `None` is in
/// the missing mask, so a name can never be both observed and missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub pivot: LangId,
    pub target: LangId,
    values: [Option<f64>; NUM_FEATURES],
}

impl FeatureVector {
    pub fn new(
        pivot: LangId,
        target: LangId,
        values: [Option<f64>; NUM_FEATURES],
    ) -> Result<Self, DataError> {
        for name in FeatureName::ALL {
            if let Some(v) = values[name.index()] {
                if !name.check_range(v) {
                    return Err(DataError::FeatureOutOfRange {
                        feature: name.as_str(),
                        value: v,
                    });
                }
            }
        }
        Ok(FeatureVector {
            pivot,
            target,
            values,
        })
    }

    pub fn get(&self, name: FeatureName) -> Option<f64> {
        self.values[name.index()]
    }

    pub fn values(&self) -> &[Option<f64>; NUM_FEATURES] {
        &self.values
    }

    pub fn observed(&self) -> BTreeMap<FeatureName, f64> {
        FeatureName::ALL
            .into_iter()
            .filter_map(|n| self.get(n).map(|v| (n, v)))
            .collect()
    }

    pub fn missing_mask(&self) -> BTreeSet<FeatureName> {
        FeatureName::ALL
            .into_iter()
            .filter(|n| self.get(*n).is_none())
            .collect()
    }

    pub fn pair(&self) -> LangPair {
        (self.pivot.clone(), self.target.clone())
    }
}

/// Resource class (0 = low .. 5 = high) and pre-training corpus size of a language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageMeta {
    pub lang: LangId,
    pub resource_class: u8,
    pub pretrain_words: f64,
}

impl LanguageMeta {
    pub fn new(lang: LangId, resource_class: u8, pretrain_words: f64) -> Result<Self, DataError> {
        if resource_class > 5 {
            return Err(DataError::InvalidClass(resource_class as i64));
        }
        if !(pretrain_words.is_finite() && pretrain_words > 0.0) {
            return Err(DataError::NonPositiveWords(pretrain_words));
        }
        Ok(LanguageMeta {
            lang,
            resource_class,
            pretrain_words,
        })
    }

    /// Classes 4 and 5 are treated as high-resource.
    pub fn is_high_resource(&self) -> bool {
        self.resource_class >= 4
    }
}

/// Score records plus their pair features and language metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<PerformanceRecord>,
    pub features: BTreeMap<LangPair, FeatureVector>,
    pub meta: BTreeMap<LangId, LanguageMeta>,
    pub tasks: BTreeSet<TaskId>,
}

impl Dataset {
    /// Builds a dataset and checks record uniqueness and feature coverage.
    pub fn new(
        records: Vec<PerformanceRecord>,
        features: BTreeMap<LangPair, FeatureVector>,
        meta: BTreeMap<LangId, LanguageMeta>,
    ) -> Result<Self, DataError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            let key = (r.model.clone(), r.task.clone(), r.pivot.clone(), r.target.clone());
            if !seen.insert(key) {
                return Err(DataError::DuplicateRecord(format!(
                    "{}/{}/{}->{}",
                    r.model, r.task, r.pivot, r.target
                )));
            }
            if !features.contains_key(&r.pair()) {
                return Err(DataError::MissingFeatures(format!("{}->{}", r.pivot, r.target)));
            }
        }
        let tasks = records.iter().map(|r| r.task.clone()).collect();
        Ok(Dataset {
            records,
            features,
            meta,
            tasks,
        })
    }

    /// Same features and metadata, different records.
    pub fn with_records(&self, records: Vec<PerformanceRecord>) -> Dataset {
        let tasks = records.iter().map(|r| r.task.clone()).collect();
        Dataset {
            records,
            features: self.features.clone(),
            meta: self.meta.clone(),
            tasks,
        }
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.model.as_str()).collect()
    }

    /// Restricts the records to a single multilingual model.
    pub fn select_model(&self, model: &str) -> Dataset {
        self.with_records(
            self.records
                .iter()
                .filter(|r| r.model == model)
                .cloned()
                .collect(),
        )
    }

    pub fn task_records<'a>(
        &'a self,
        task: &'a TaskId,
    ) -> impl Iterator<Item = &'a PerformanceRecord> + 'a {
        self.records.iter().filter(move |r| &r.task == task)
    }

    /// Distinct target languages observed for `task`.
    pub fn targets(&self, task: &TaskId) -> BTreeSet<LangId> {
        self.task_records(task).map(|r| r.target.clone()).collect()
    }

    pub fn feature_row(&self, pivot: &LangId, target: &LangId) -> Option<&FeatureVector> {
        self.features.get(&(pivot.clone(), target.clone()))
    }
}

/// Dense design matrix and targets of one task, ready for a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub task: TaskId,
    pub x: Matrix,
    pub y: Vec<f64>,
}
