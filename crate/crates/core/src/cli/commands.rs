use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, read_meta, write_features, write_text, Dataset, FeatureName, TaskId};
use crate::eval::{
    aggregate, failed_report, fig1_csv, fig2_csv, helper_sweep, records_csv, render_table, run_protocol, EvalReport,
    ModelSpec, Protocol, SweepPoint, TaskFailure, REPORT_SCHEMA_VERSION,
};
use crate::explain::{attribution_csv, explain_task, Method};
use crate::features::{
    build_feature_table, read_corpus_stats, read_typology, read_vocab_dir, read_wals, FeatureResources,
};

use super::config::{digest_json, file_digests, ConfigFile, RunConfig};
use super::{chain, CliError, ExplainArgs, FeaturesArgs, ReportArgs, RunArgs, EXIT_OK, EXIT_PARTIAL};

/// Everything `evaluate` writes for one multilingual model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub mmlm: String,
    pub reports: Vec<EvalReport>,
}

fn input<E: std::error::Error>(e: E) -> CliError {
    CliError::Input(chain(&e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    write_text(path, text).map_err(input)
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn preamble(hash: &str, seed: u64) -> Vec<String> {
    vec![format!("config_hash={hash} seed={seed}")]
}

/// Directory name for a multilingual model's outputs.
fn dir_name(mmlm: &str) -> String {
    mmlm.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn resolve(a: &RunArgs) -> Result<RunConfig, CliError> {
    let cfg = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let required = |flag: Option<&PathBuf>, file: Option<PathBuf>, name: &str| {
        flag.cloned()
            .or(file)
            .ok_or_else(|| CliError::Input(format!("--{name} is required (flag or config file)")))
    };
    let pick = |flag: &[String], file: Vec<String>| if flag.is_empty() { file } else { flag.to_vec() };
    let models = pick(&a.models, cfg.models);
    if models.is_empty() {
        return Err(CliError::Input("no models given; use --models".into()));
    }
    let mut protocols = pick(&a.protocol, cfg.protocols);
    if protocols.is_empty() {
        protocols.push("lolo".into());
    }
    let rc = RunConfig {
        scores: required(a.scores.as_ref(), cfg.scores, "scores")?,
        features: required(a.features.as_ref(), cfg.features, "features")?,
        meta: a.meta.clone().or(cfg.meta),
        models,
        protocols,
        tasks: pick(&a.task, cfg.tasks),
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        out: required(a.out.as_ref(), cfg.out, "out")?,
        helper_sweep: a.helper_sweep || cfg.helper_sweep.unwrap_or(false),
    };
    rc.check_paths()?;
    Ok(rc)
}

struct Loaded {
    rc: RunConfig,
    ds: Dataset,
    specs: Vec<ModelSpec>,
    tasks: Vec<TaskId>,
}

fn load(a: &RunArgs) -> Result<Loaded, CliError> {
    let rc = resolve(a)?;
    let specs = rc
        .models
        .iter()
        .map(|m| ModelSpec::parse(m, rc.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let ds = load_dataset(&rc.scores, &rc.features, rc.meta.as_deref()).map_err(input)?;
    let tasks = if rc.tasks.is_empty() {
        ds.tasks.iter().cloned().collect()
    } else {
        let mut out = Vec::new();
        for t in &rc.tasks {
            let id = TaskId::new(t.as_str()).map_err(input)?;
            if !ds.tasks.contains(&id) {
                return Err(CliError::Input(format!("task {t} not found in {}", rc.scores.display())));
            }
            out.push(id);
        }
        out
    };
    Ok(Loaded { rc, ds, specs, tasks })
}

pub fn cmd_evaluate(a: &RunArgs) -> Result<i32, CliError> {
    let Loaded { rc, ds, specs, tasks } = load(a)?;
    let protocols = rc
        .protocols
        .iter()
        .map(|p| p.parse::<Protocol>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    if protocols.contains(&Protocol::Llro) && ds.meta.is_empty() {
        return Err(CliError::Input("llro needs language metadata; pass --meta".into()));
    }
    let hash = rc.hash("evaluate", &[])?;
    let pre = preamble(&hash, rc.seed);
    let mut partial = false;
    for mmlm in ds.models() {
        let sub = ds.select_model(mmlm);
        let mut reports = Vec::new();
        let mut sweeps: Vec<SweepPoint> = Vec::new();
        for spec in &specs {
            for &protocol in &protocols {
                let mut frags = Vec::new();
                let mut failures = Vec::new();
                for task in tasks.iter().filter(|t| sub.tasks.contains(*t)) {
                    match run_protocol(&sub, spec, task, protocol) {
                        Ok(f) => frags.push(f),
                        Err(e) => {
                            log::warn!("{mmlm}/{}/{protocol}/{task}: {}", spec.kind, chain(&e));
                            failures.push(TaskFailure {
                                task: task.clone(),
                                error: chain(&e),
                            });
                        }
                    }
                    if rc.helper_sweep && protocol == Protocol::Lolo {
                        match helper_sweep(&sub, spec, task, protocol) {
                            Ok(pts) => sweeps.extend(pts),
                            Err(e) => {
                                log::warn!("helper sweep {mmlm}/{}/{task}: {}", spec.kind, chain(&e));
                                partial = true;
                            }
                        }
                    }
                }
                partial |= !failures.is_empty();
                reports.push(if frags.is_empty() {
                    failed_report(spec.clone(), mmlm.to_owned(), protocol, failures)
                } else {
                    aggregate(frags, failures).map_err(input)?
                });
            }
        }
        let dir = rc.out.join(dir_name(mmlm));
        create_dir(&dir)?;
        let run = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: hash.clone(),
            seed: rc.seed,
            mmlm: mmlm.to_owned(),
            reports,
        };
        let json = serde_json::to_string_pretty(&run).expect("report serializes") + "\n";
        write(&dir.join("report.json"), &json)?;
        write(&dir.join("records.csv"), &records_csv(&run.reports, &pre).map_err(input)?)?;
        write(&dir.join("fig1.csv"), &fig1_csv(&run.reports, &pre).map_err(input)?)?;
        if rc.helper_sweep {
            write(&dir.join("fig2.csv"), &fig2_csv(&sweeps, &pre).map_err(input)?)?;
        }
        let table = render_table(&run.reports);
        write(&dir.join("table.txt"), &format!("# {}\n{table}", pre[0]))?;
        print!("{table}");
    }
    Ok(if partial { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<i32, CliError> {
    let method: Method = a.method.parse().map_err(input)?;
    let Loaded { rc, ds, specs, tasks } = load(&a.run)?;
    if method == Method::LinearShap {
        if let Some(s) = specs.iter().find(|s| !s.kind.is_linear()) {
            return Err(CliError::InvalidMethod(format!(
                "linear-shap needs a linear model (lasso, group-lasso), not {}; use --method permutation",
                s.kind
            )));
        }
    }
    let extra = [
        ("method".to_owned(), method.to_string()),
        ("repeats".to_owned(), a.repeats.to_string()),
    ];
    let hash = rc.hash("explain", &extra)?;
    let pre = preamble(&hash, rc.seed);
    let mut partial = false;
    for mmlm in ds.models() {
        let sub = ds.select_model(mmlm);
        let mut items = Vec::new();
        for spec in &specs {
            for task in tasks.iter().filter(|t| sub.tasks.contains(*t)) {
                match explain_task(&sub, spec, task, method, a.repeats) {
                    Ok(v) => items.push(v),
                    Err(e) => {
                        log::warn!("{mmlm}/{}/{task}: {}", spec.kind, chain(&e));
                        partial = true;
                    }
                }
            }
        }
        let dir = rc.out.join(dir_name(mmlm));
        create_dir(&dir)?;
        write(&dir.join("attributions.csv"), &attribution_csv(&items, &pre).map_err(input)?)?;
    }
    Ok(if partial { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn cmd_features(a: &FeaturesArgs) -> Result<i32, CliError> {
    let mut res = FeatureResources::default();
    let mut files: Vec<PathBuf> = Vec::new();
    let exists = |p: &Path| -> Result<(), CliError> {
        if p.exists() {
            Ok(())
        } else {
            Err(CliError::Input(format!("{} does not exist", p.display())))
        }
    };
    if let Some(dir) = &a.vocab_dir {
        exists(dir)?;
        res.vocabs = read_vocab_dir(dir).map_err(input)?;
        let mut txt: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        txt.sort();
        files.extend(txt);
    }
    if let Some(p) = &a.typology {
        exists(p)?;
        res.typology = read_typology(p).map_err(input)?;
        files.push(p.clone());
    }
    if let Some(p) = &a.meta {
        exists(p)?;
        res.meta = read_meta(p).map_err(input)?;
        files.push(p.clone());
    }
    if let Some(p) = &a.stats {
        exists(p)?;
        res.tokenization = read_corpus_stats(p).map_err(input)?;
        files.push(p.clone());
    }
    match &a.wals {
        Some(p) if p.exists() => {
            res.wals = Some(read_wals(p).map_err(input)?);
            files.push(p.clone());
        }
        Some(p) => log::warn!("WALS table {} not found; wmrr left empty", p.display()),
        None => log::warn!("no WALS table given; wmrr left empty"),
    }
    let pivots: BTreeSet<&str> = a.pivots.iter().map(String::as_str).collect();
    let pairs: Vec<_> = res
        .all_pairs()
        .into_iter()
        .filter(|(p, _)| pivots.is_empty() || pivots.contains(p.as_str()))
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Input("no language pairs: resources cover fewer than two languages".into()));
    }
    let table = build_feature_table(&res, &pairs).map_err(input)?;

    let seed = a.seed.unwrap_or(0);
    let file_refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let hash = digest_json(&(
        "features",
        &a.pivots,
        seed,
        file_digests(&file_refs)?,
    ));
    create_dir(&a.out)?;
    let path = a.out.join("features.csv");
    write_features(&path, table.values(), &preamble(&hash, seed)).map_err(input)?;

    let mut missing: BTreeMap<&str, (usize, BTreeSet<FeatureName>)> = BTreeMap::new();
    for fv in table.values() {
        let e = missing.entry(fv.target.as_str()).or_default();
        e.0 += 1;
        e.1.extend(fv.missing_mask());
    }
    println!("wrote {} pairs to {}", table.len(), path.display());
    for (lang, (n, miss)) in &missing {
        let names: Vec<&str> = miss.iter().map(|f| f.as_str()).collect();
        let observed = FeatureName::ALL.len() - miss.len();
        let detail = if names.is_empty() {
            String::new()
        } else {
            format!(" (missing: {})", names.join(","))
        };
        println!("{lang}: {n} pairs, {observed}/{} features{detail}", FeatureName::ALL.len());
    }
    Ok(EXIT_OK)
}

/// Checks that stored aggregates agree with the per-record errors.
fn verify(r: &EvalReport) -> Result<(), String> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
    for t in &r.tasks {
        if !close(t.mae, t.recompute_mae()) {
            return Err(format!("task {} MAE does not match its records", t.task));
        }
    }
    if r.tasks.is_empty() {
        return Ok(());
    }
    let again = aggregate(r.tasks.clone(), r.failures.clone()).map_err(|e| e.to_string())?;
    let same = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    };
    if !same(again.macro_mae, r.macro_mae) || !same(again.low_data_mae, r.low_data_mae) {
        return Err("averages do not match the task MAEs".into());
    }
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<i32, CliError> {
    let mut reports = Vec::new();
    let mut pre = Vec::new();
    for p in &a.inputs {
        let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        let run: RunReport =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        for r in &run.reports {
            verify(r).map_err(|m| CliError::Input(format!("{}: {m}", p.display())))?;
        }
        pre.push(format!("config_hash={} seed={}", run.config_hash, run.seed));
        reports.extend(run.reports);
    }
    pre.dedup();
    let table = render_table(&reports);
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            let header: String = pre.iter().map(|l| format!("# {l}\n")).collect();
            write(&dir.join("table.txt"), &format!("{header}{table}"))?;
            write(&dir.join("fig1.csv"), &fig1_csv(&reports, &pre).map_err(input)?)?;
        }
        None => print!("{table}"),
    }
    Ok(EXIT_OK)
}
