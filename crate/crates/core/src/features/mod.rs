//! Pair and target-language features computed from raw resources:
//! subword vocabularies, typology vectors, WALS feature values, corpus sizes
//! and tokenizer statistics.

mod io;
mod tokenizer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, FeatureName, FeatureVector, LangId, LangPair, LanguageMeta, NUM_FEATURES};

pub use io::{read_corpus_stats, read_typology, read_vocab, read_vocab_dir, read_wals};
pub use tokenizer::LongestMatchTokenizer;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty vocabulary for {0}")]
    EmptyVocab(String),
    #[error("typology kind mismatch: {0} vs {1}")]
    KindMismatch(TypologyKind, TypologyKind),
    #[error("geography vectors have no similarity; use geo_distance")]
    GeographyNotSimilarity,
    #[error("distance requires geography vectors, got {0}")]
    NotGeography(TypologyKind),
    #[error("{kind} vector for {lang}: {msg}")]
    InvalidTypology {
        lang: String,
        kind: TypologyKind,
        msg: String,
    },
    #[error("pre-training word count must be positive, got {0}")]
    NonPositiveWords(f64),
    #[error("language {0} absent from WALS table")]
    NotInWals(String),
    #[error("no language metadata for WALS ranking")]
    EmptyMeta,
    #[error("invalid tokenization stats for {lang}: {msg}")]
    InvalidStats { lang: String, msg: String },
    #[error("no resources cover pair {0}->{1}")]
    NoResources(String, String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Subword types observed for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabSet {
    pub lang: LangId,
    tokens: BTreeSet<String>,
}

impl VocabSet {
    pub fn new(lang: LangId, tokens: BTreeSet<String>) -> Result<VocabSet, FeatureError> {
        if tokens.is_empty() {
            return Err(FeatureError::EmptyVocab(lang.to_string()));
        }
        Ok(VocabSet { lang, tokens })
    }

    pub fn tokens(&self) -> &BTreeSet<String> {
        &self.tokens
    }
}

/// Jaccard overlap `|Vp ∩ Vt| / |Vp ∪ Vt|` of two subword vocabularies.
pub fn subword_overlap(vp: &VocabSet, vt: &VocabSet) -> f64 {
    let inter = vp.tokens.intersection(&vt.tokens).count();
    let union = vp.tokens.len() + vt.tokens.len() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypologyKind {
    Syntax,
    Phonology,
    Genetic,
    Geography,
}

impl TypologyKind {
    pub const ALL: [TypologyKind; 4] = [
        TypologyKind::Syntax,
        TypologyKind::Phonology,
        TypologyKind::Genetic,
        TypologyKind::Geography,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TypologyKind::Syntax => "syntax",
            TypologyKind::Phonology => "phonology",
            TypologyKind::Genetic => "genetic",
            TypologyKind::Geography => "geography",
        }
    }

    pub fn parse(s: &str) -> Option<TypologyKind> {
        TypologyKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Feature slot filled by this kind's pairwise value.
    pub fn feature(self) -> FeatureName {
        match self {
            TypologyKind::Syntax => FeatureName::SyntacticSimilarity,
            TypologyKind::Phonology => FeatureName::PhonologicalSimilarity,
            TypologyKind::Genetic => FeatureName::GeneticSimilarity,
            TypologyKind::Geography => FeatureName::GeographicDistance,
        }
    }
}

impl fmt::Display for TypologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Typological feature vector with possibly unobserved dimensions.
/// Non-geography entries are feature memberships in `[0, 1]`; geography
/// vectors are coordinates and must be fully observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TypologyVector {
    pub lang: LangId,
    pub kind: TypologyKind,
    dims: Vec<Option<f64>>,
}

impl TypologyVector {
    pub fn new(
        lang: LangId,
        kind: TypologyKind,
        dims: Vec<Option<f64>>,
    ) -> Result<TypologyVector, FeatureError> {
        let bad = |msg: &str| FeatureError::InvalidTypology {
            lang: lang.to_string(),
            kind,
            msg: msg.to_owned(),
        };
        if dims.is_empty() {
            return Err(bad("no dimensions"));
        }
        for v in dims.iter().flatten() {
            if !v.is_finite() {
                return Err(bad("non-finite value"));
            }
            if kind != TypologyKind::Geography && !(0.0..=1.0).contains(v) {
                return Err(bad("value outside [0, 1]"));
            }
        }
        if kind == TypologyKind::Geography && dims.iter().any(Option::is_none) {
            return Err(bad("geography must be fully observed"));
        }
        Ok(TypologyVector { lang, kind, dims })
    }

    pub fn dims(&self) -> &[Option<f64>] {
        &self.dims
    }
}

/// Cosine similarity over the dimensions observed in both vectors. `None`
/// when no dimension is shared or either shared subvector is all zero.
pub fn typo_similarity(a: &TypologyVector, b: &TypologyVector) -> Result<Option<f64>, FeatureError> {
    if a.kind != b.kind {
        return Err(FeatureError::KindMismatch(a.kind, b.kind));
    }
    if a.kind == TypologyKind::Geography {
        return Err(FeatureError::GeographyNotSimilarity);
    }
    let (mut ab, mut aa, mut bb, mut shared) = (0.0, 0.0, 0.0, 0usize);
    for (x, y) in a.dims.iter().zip(&b.dims) {
        if let (Some(x), Some(y)) = (x, y) {
            ab += x * y;
            aa += x * x;
            bb += y * y;
            shared += 1;
        }
    }
    if shared == 0 || aa == 0.0 || bb == 0.0 {
        return Ok(None);
    }
    Ok(Some((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)))
}

fn euclidean(a: &TypologyVector, b: &TypologyVector) -> Result<f64, FeatureError> {
    for v in [a, b] {
        if v.kind != TypologyKind::Geography {
            return Err(FeatureError::NotGeography(v.kind));
        }
    }
    if a.dims.len() != b.dims.len() {
        return Err(FeatureError::InvalidTypology {
            lang: b.lang.to_string(),
            kind: b.kind,
            msg: "dimension mismatch".into(),
        });
    }
    Ok(a.dims
        .iter()
        .zip(&b.dims)
        .map(|(x, y)| (x.unwrap() - y.unwrap()).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Euclidean geography distances normalized by the largest pairwise distance
/// within a fixed language set, so the farthest pair maps to 1.
#[derive(Debug, Clone)]
pub struct GeoNormalizer {
    max_distance: f64,
}

impl GeoNormalizer {
    pub fn new<'a>(set: impl IntoIterator<Item = &'a TypologyVector>) -> Result<Self, FeatureError> {
        let set: Vec<&TypologyVector> = set.into_iter().collect();
        let mut max_distance = 0.0f64;
        for (i, a) in set.iter().enumerate() {
            for b in &set[i + 1..] {
                max_distance = max_distance.max(euclidean(a, b)?);
            }
        }
        Ok(GeoNormalizer { max_distance })
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }

    pub fn geo_distance(&self, a: &TypologyVector, b: &TypologyVector) -> Result<f64, FeatureError> {
        let d = euclidean(a, b)?;
        if self.max_distance == 0.0 {
            return Ok(0.0);
        }
        Ok((d / self.max_distance).min(1.0))
    }
}

/// `log10` of the pre-training corpus size in words.
pub fn pretrain_size_feature(meta: &LanguageMeta) -> Result<f64, FeatureError> {
    if !(meta.pretrain_words > 0.0) {
        return Err(FeatureError::NonPositiveWords(meta.pretrain_words));
    }
    Ok(meta.pretrain_words.log10())
}

/// WALS feature values (e.g. `81A=SVO`) held by each language.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WalsTable {
    rows: BTreeMap<LangId, BTreeSet<String>>,
}

impl WalsTable {
    pub fn new(rows: BTreeMap<LangId, BTreeSet<String>>) -> Result<WalsTable, FeatureError> {
        for (lang, values) in &rows {
            if values.iter().any(|v| v.trim().is_empty()) {
                return Err(FeatureError::NotInWals(format!("{lang} (empty feature value)")));
            }
        }
        Ok(WalsTable { rows })
    }

    pub fn rows(&self) -> &BTreeMap<LangId, BTreeSet<String>> {
        &self.rows
    }

    pub fn contains(&self, lang: &LangId) -> bool {
        self.rows.get(lang).is_some_and(|v| !v.is_empty())
    }

    /// Pre-training word mass behind every feature value. Languages without
    /// metadata contribute nothing.
    pub fn masses(&self, meta: &BTreeMap<LangId, LanguageMeta>) -> BTreeMap<&str, f64> {
        let mut mass: BTreeMap<&str, f64> = BTreeMap::new();
        for (lang, values) in &self.rows {
            let words = meta.get(lang).map_or(0.0, |m| m.pretrain_words);
            for v in values {
                *mass.entry(v.as_str()).or_insert(0.0) += words;
            }
        }
        mass
    }
}

/// Typological rarity of `t`: feature values are ranked by descending
/// pre-training mass (competition ranking, rank 1 = most mass) and the
/// reciprocal ranks of `t`'s values are averaged.
pub fn wmrr(
    t: &LangId,
    wals: &WalsTable,
    meta: &BTreeMap<LangId, LanguageMeta>,
) -> Result<f64, FeatureError> {
    if meta.is_empty() {
        return Err(FeatureError::EmptyMeta);
    }
    let own = wals
        .rows
        .get(t)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| FeatureError::NotInWals(t.to_string()))?;
    let masses = wals.masses(meta);
    let mut sorted: Vec<f64> = masses.values().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rank = |m: f64| 1 + sorted.partition_point(|&x| x > m);
    let total: f64 = own.iter().map(|v| 1.0 / rank(masses[v.as_str()]) as f64).sum();
    Ok(total / own.len() as f64)
}

/// Token counts of a tokenizer over a language's corpus sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizationStats {
    pub word_count: u64,
    pub subword_count: u64,
    pub continued_word_count: u64,
}

impl TokenizationStats {
    pub fn new(
        lang: &LangId,
        word_count: u64,
        subword_count: u64,
        continued_word_count: u64,
    ) -> Result<Self, FeatureError> {
        let bad = |msg: &str| FeatureError::InvalidStats {
            lang: lang.to_string(),
            msg: msg.to_owned(),
        };
        if word_count == 0 {
            return Err(bad("zero words"));
        }
        if subword_count < word_count {
            return Err(bad("fewer subwords than words"));
        }
        if continued_word_count > word_count {
            return Err(bad("more continued words than words"));
        }
        Ok(TokenizationStats {
            word_count,
            subword_count,
            continued_word_count,
        })
    }
}

/// Fertility (subwords per word) and proportion of continued words.
pub fn tokenizer_metrics(stats: &TokenizationStats) -> (f64, f64) {
    let w = stats.word_count as f64;
    (
        stats.subword_count as f64 / w,
        stats.continued_word_count as f64 / w,
    )
}

/// Raw inputs for [`build_feature_table`]. Every field may be partial.
#[derive(Debug, Clone, Default)]
pub struct FeatureResources {
    pub vocabs: BTreeMap<LangId, VocabSet>,
    pub typology: BTreeMap<(LangId, TypologyKind), TypologyVector>,
    pub wals: Option<WalsTable>,
    pub meta: BTreeMap<LangId, LanguageMeta>,
    pub tokenization: BTreeMap<LangId, TokenizationStats>,
}

impl FeatureResources {
    /// Every language mentioned by any resource.
    pub fn languages(&self) -> BTreeSet<LangId> {
        let mut out: BTreeSet<LangId> = self.vocabs.keys().cloned().collect();
        out.extend(self.typology.keys().map(|(l, _)| l.clone()));
        if let Some(w) = &self.wals {
            out.extend(w.rows().keys().cloned());
        }
        out.extend(self.meta.keys().cloned());
        out.extend(self.tokenization.keys().cloned());
        out
    }

    /// All ordered pairs of distinct languages.
    pub fn all_pairs(&self) -> Vec<LangPair> {
        let langs: Vec<LangId> = self.languages().into_iter().collect();
        let mut out = Vec::new();
        for p in &langs {
            for t in &langs {
                if p != t {
                    out.push((p.clone(), t.clone()));
                }
            }
        }
        out
    }
}

/// Assembles one [`FeatureVector`] per requested pair. Features whose inputs
/// are absent go to the missing mask; a pair with nothing computable is an
/// error.
pub fn build_feature_table(
    res: &FeatureResources,
    pairs: &[LangPair],
) -> Result<BTreeMap<LangPair, FeatureVector>, FeatureError> {
    let geo = GeoNormalizer::new(
        res.typology
            .iter()
            .filter(|((_, k), _)| *k == TypologyKind::Geography)
            .map(|(_, v)| v),
    )?;
    let mut out = BTreeMap::new();
    for (p, t) in pairs {
        let mut values = [None; NUM_FEATURES];
        if let (Some(vp), Some(vt)) = (res.vocabs.get(p), res.vocabs.get(t)) {
            values[FeatureName::SubwordOverlap.index()] = Some(subword_overlap(vp, vt));
        }
        for kind in TypologyKind::ALL {
            let (Some(a), Some(b)) = (
                res.typology.get(&(p.clone(), kind)),
                res.typology.get(&(t.clone(), kind)),
            ) else {
                continue;
            };
            values[kind.feature().index()] = if kind == TypologyKind::Geography {
                Some(geo.geo_distance(a, b)?)
            } else {
                typo_similarity(a, b)?
            };
        }
        if let Some(m) = res.meta.get(t) {
            values[FeatureName::PretrainSize.index()] = Some(pretrain_size_feature(m)?);
        }
        if let Some(w) = &res.wals {
            if w.contains(t) && !res.meta.is_empty() {
                values[FeatureName::Wmrr.index()] = Some(wmrr(t, w, &res.meta)?);
            }
        }
        if let Some(s) = res.tokenization.get(t) {
            let (fert, pcw) = tokenizer_metrics(s);
            values[FeatureName::Fertility.index()] = Some(fert);
            values[FeatureName::ContinuedWords.index()] = Some(pcw);
        }
        if values.iter().all(Option::is_none) {
            return Err(FeatureError::NoResources(p.to_string(), t.to_string()));
        }
        let fv = FeatureVector::new(p.clone(), t.clone(), values)?;
        out.insert((p.clone(), t.clone()), fv);
    }
    Ok(out)
}
