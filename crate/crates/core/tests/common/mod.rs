#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xferlens::data::{
    write_features, write_meta, write_scores, Dataset, FeatureName, FeatureVector, LangId, LanguageMeta,
    PerformanceRecord, TaskId, NUM_FEATURES,
};

pub fn lang(s: &str) -> LangId {
    LangId::new(s).unwrap()
}

pub fn task(s: &str) -> TaskId {
    TaskId::new(s).unwrap()
}

/// Two-letter code for the `i`-th synthetic language.
pub fn code(i: usize) -> String {
    [b'a' + (i / 26) as u8, b'a' + (i % 26) as u8].iter().map(|&b| b as char).collect()
}

/// Planted linear data: pivot `en`, languages `aa, ab, ...` with random
/// features; every task's score is `0.35 + 0.4 x_syn - 0.3 x_geo + noise`.
/// Task `T{n_tasks-1}` keeps only its first `small` languages. The first
/// 60% of languages are high-resource (class 5), the rest class 2.
#[derive(Debug, Clone, Copy)]
pub struct Planted {
    pub n_tasks: usize,
    pub n_langs: usize,
    pub small: usize,
    pub sigma: f64,
    pub seed: u64,
}

pub const PLANTED_SUPPORT: [FeatureName; 2] = [FeatureName::SyntacticSimilarity, FeatureName::GeographicDistance];

impl Planted {
    pub fn build(&self) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let en = lang("en");
        let mut features = BTreeMap::new();
        let mut xs = Vec::new();
        let mut meta = BTreeMap::new();
        for i in 0..self.n_langs {
            let mut v = [None; NUM_FEATURES];
            for s in v.iter_mut() {
                *s = Some(rng.gen_range(0.0..1.0));
            }
            v[FeatureName::Fertility.index()] = v[FeatureName::Fertility.index()].map(|u| 1.0 + u);
            v[FeatureName::PretrainSize.index()] = Some(rng.gen_range(5.0..9.0));
            let l = lang(&code(i));
            let fv = FeatureVector::new(en.clone(), l.clone(), v).unwrap();
            features.insert(fv.pair(), fv);
            xs.push(v.map(|o| o.unwrap()));
            let class = if i * 10 < self.n_langs * 6 { 5 } else { 2 };
            meta.insert(l.clone(), LanguageMeta::new(l, class, 1e6).unwrap());
        }
        let mut records = Vec::new();
        for k in 0..self.n_tasks {
            let keep = if k + 1 == self.n_tasks { self.small } else { self.n_langs };
            for (i, x) in xs.iter().enumerate().take(keep) {
                let e: f64 = rng.sample(StandardNormal);
                let y = 0.35 + 0.4 * x[PLANTED_SUPPORT[0].index()] - 0.3 * x[PLANTED_SUPPORT[1].index()]
                    + self.sigma * e;
                let r = PerformanceRecord::new("xlmr", task(&format!("T{k}")), en.clone(), lang(&code(i)), y.clamp(0.0, 1.0));
                records.push(r.unwrap());
            }
        }
        Dataset::new(records, features, meta).unwrap()
    }
}

pub struct Files {
    pub scores: PathBuf,
    pub features: PathBuf,
    pub meta: PathBuf,
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Files {
    let f = Files {
        scores: dir.join("scores.csv"),
        features: dir.join("features.csv"),
        meta: dir.join("meta.csv"),
    };
    write_scores(&f.scores, &ds.records, &[]).unwrap();
    write_features(&f.features, ds.features.values(), &[]).unwrap();
    write_meta(&f.meta, ds.meta.values(), &[]).unwrap();
    f
}
