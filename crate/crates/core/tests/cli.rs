mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{write_dataset, Planted};
use xferlens::cli::RunReport;

fn xferlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xferlens"))
        .args(args)
        .env("XFERLENS_THREADS", "2")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(dir: &Path, n_tasks: usize, n_langs: usize, small: usize) -> common::Files {
    let ds = Planted {
        n_tasks,
        n_langs,
        small,
        sigma: 0.01,
        seed: 9,
    }
    .build();
    write_dataset(&ds, dir)
}

fn report(path: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_writes_table_cells_and_embeds_hash() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 2, 8, 6);
    let out = dir.path().join("out");
    let o = xferlens(&[
        "evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "awt,lasso",
        "--protocol", "lolo", "--seed", "3", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(&out.join("xlmr/report.json"));
    assert_eq!(rep.reports.len(), 2);
    assert!(rep.reports.iter().all(|r| r.tasks.len() == 2 && r.failures.is_empty()));
    assert_eq!(rep.seed, 3);
    let table = fs::read_to_string(out.join("xlmr/table.txt")).unwrap();
    let tag = format!("# config_hash={} seed=3", rep.config_hash);
    assert!(table.starts_with(&tag));
    for row in ["T0 (|T|=8)", "T1 (|T|=6)"] {
        let line = table.lines().find(|l| l.starts_with(row)).unwrap();
        assert_eq!(line.split_whitespace().filter(|c| c.parse::<f64>().is_ok()).count(), 2);
    }
    for csv in ["records.csv", "fig1.csv"] {
        assert!(fs::read_to_string(out.join("xlmr").join(csv)).unwrap().starts_with(&tag));
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 3, 8, 8);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = xferlens(&[
            "evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--meta", s(&f.meta),
            "--models", "gbt:n_estimators=20,cmf:sweeps=20,group-lasso", "--protocol", "lolo,llro",
            "--seed", "5", "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out.join("xlmr")
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["report.json", "records.csv", "fig1.csv", "table.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn planted_group_lasso_beats_awt_cell() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 4, 14, 6);
    let out = dir.path().join("out");
    let o = xferlens(&[
        "evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "awt,group-lasso",
        "--task", "T3", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rep = report(&out.join("xlmr/report.json"));
    let mae = |k: &str| rep.reports.iter().find(|r| r.model.kind.as_str() == k).unwrap().macro_mae.unwrap();
    assert!(mae("group-lasso") < mae("awt"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 2, 6, 6);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "schema_version = 1\nscores = \"scores.csv\"\nfeatures = \"features.csv\"\nmodels = [\"lasso\"]\nseed = 1\nout = \"from_config\"\n",
    )
    .unwrap();
    let o = xferlens(&["evaluate", "--config", s(&cfg), "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(&dir.path().join("from_config/xlmr/report.json"));
    assert_eq!(rep.seed, 2);
    assert_eq!(rep.reports[0].model.kind.as_str(), "lasso");
    drop(f);
}

#[test]
fn partial_failure_exits_3_after_other_cells() {
    let dir = tempfile::tempdir().unwrap();
    // the small task has 2 targets: every fold leaves one point, too few for a GP
    let f = toy(dir.path(), 2, 6, 2);
    let out = dir.path().join("out");
    let o = xferlens(&[
        "evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "dgpr:epochs=5,awt",
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let rep = report(&out.join("xlmr/report.json"));
    let gp = &rep.reports[0];
    assert_eq!(gp.tasks.len(), 1);
    assert_eq!(gp.failures.len(), 1);
    assert!(gp.failures[0].error.contains("T1"));
    assert_eq!(rep.reports[1].tasks.len(), 2);
    let table = fs::read_to_string(out.join("xlmr/table.txt")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("T1") && l.contains("fail")));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 2, 6, 6);
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.csv");
    let o = xferlens(&["evaluate", "--scores", s(&missing), "--features", s(&f.features), "--models", "awt", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = xferlens(&["evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "svm", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = xferlens(&["evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "awt", "--protocol", "kfold", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = xferlens(&["evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "awt", "--task", "ZZ", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&f.scores, "model,task,pivot,target,score\nxlmr,T0,en,aa,0.5\nxlmr,T0,en,ab,oops\n").unwrap();
    let o = xferlens(&["evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "awt", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scores.csv:3:"), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(xferlens(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn explain_methods_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 3, 8, 8);
    let out = dir.path().join("out");
    let base = ["--scores", s(&f.scores), "--features", s(&f.features), "--out", s(&out)];
    let run = |extra: &[&str]| {
        let mut args = vec!["explain"];
        args.extend(base);
        args.extend(extra);
        xferlens(&args)
    };
    let o = run(&["--models", "group-lasso", "--method", "linear-shap"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("xlmr/attributions.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3 * 9);
    assert!(rows.iter().all(|r| r.starts_with("group-lasso,T") && r.ends_with(",linear-shap")));

    let o = run(&["--models", "gbt", "--method", "linear-shap"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("permutation"));

    let o = run(&["--models", "gbt:n_estimators=10", "--method", "permutation", "--repeats", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("xlmr/attributions.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("gbt,T0,s_syn,") && l.ends_with(",permutation")));
}

#[test]
fn report_rerenders_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 2, 6, 6);
    let out = dir.path().join("out");
    let o = xferlens(&["evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "awt,lasso", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let json = out.join("xlmr/report.json");
    let again = dir.path().join("again");
    let o = xferlens(&["report", s(&json), "--out", s(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(again.join("table.txt")).unwrap(), fs::read(out.join("xlmr/table.txt")).unwrap());
    assert_eq!(fs::read(again.join("fig1.csv")).unwrap(), fs::read(out.join("xlmr/fig1.csv")).unwrap());

    let mut rep = report(&json);
    rep.reports[0].tasks[0].mae += 0.01;
    fs::write(&json, serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(xferlens(&["report", s(&json)]).status.code(), Some(2));
}

#[test]
fn helper_sweep_emits_fig2() {
    let dir = tempfile::tempdir().unwrap();
    let f = toy(dir.path(), 3, 6, 6);
    let out = dir.path().join("out");
    let o = xferlens(&[
        "evaluate", "--scores", s(&f.scores), "--features", s(&f.features), "--models", "group-lasso",
        "--task", "T0", "--helper-sweep", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("xlmr/fig2.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("group-lasso,T0,0,"));
}

fn feature_resources(dir: &Path, with_wals: bool) -> Vec<String> {
    let vocab = dir.join("vocab");
    fs::create_dir_all(&vocab).unwrap();
    fs::write(vocab.join("en.txt"), "the\ncat\n##s\n").unwrap();
    fs::write(vocab.join("de.txt"), "die\ncat\n##s\n").unwrap();
    fs::write(vocab.join("hi.txt"), "ek\n##s\n").unwrap();
    fs::write(
        dir.join("typology.csv"),
        "lang,kind,d0,d1\nen,syntax,1,0\nde,syntax,1,1\nhi,syntax,0,1\nen,phonology,1,1\nde,phonology,1,0\nhi,phonology,0,1\nen,genetic,1,0\nde,genetic,1,0\nhi,genetic,0,1\nen,geography,0,0\nde,geography,3,4\nhi,geography,6,8\n",
    )
    .unwrap();
    fs::write(dir.join("meta.csv"), "lang,class,pretrain_words\nen,5,1000000000\nde,5,100000000\nhi,4,10000000\n").unwrap();
    fs::write(
        dir.join("stats.csv"),
        "lang,word_count,subword_count,continued_word_count\nen,100,120,15\nde,100,140,30\nhi,100,180,50\n",
    )
    .unwrap();
    fs::write(dir.join("wals.csv"), "lang,feature_value\nen,81A=SVO\nde,81A=SOV\nhi,81A=SOV\n").unwrap();
    let mut args: Vec<String> = ["features", "--vocab-dir"].map(String::from).to_vec();
    args.push(vocab.to_str().unwrap().into());
    for (flag, file) in [("--typology", "typology.csv"), ("--meta", "meta.csv"), ("--stats", "stats.csv")] {
        args.push(flag.into());
        args.push(dir.join(file).to_str().unwrap().into());
    }
    let wals = if with_wals { "wals.csv" } else { "absent.csv" };
    args.push("--wals".into());
    args.push(dir.join(wals).to_str().unwrap().into());
    args.push("--out".into());
    args.push(dir.join("out").to_str().unwrap().into());
    args
}

#[test]
fn features_three_languages() {
    let dir = tempfile::tempdir().unwrap();
    let args = feature_resources(dir.path(), true);
    let o = xferlens(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/features.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| !r.split(',').any(str::is_empty)), "{csv}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("de: 2 pairs, 9/9 features"));
}

#[test]
fn features_without_wals_leave_wmrr_empty() {
    let dir = tempfile::tempdir().unwrap();
    let args = feature_resources(dir.path(), false);
    let o = Command::new(env!("CARGO_BIN_EXE_xferlens"))
        .args(&args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wmrr"));
    let csv = fs::read_to_string(dir.path().join("out/features.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let w = header.iter().position(|h| *h == "wmrr").unwrap();
    assert!(lines.all(|l| l.split(',').nth(w) == Some("")));
}

#[test]
fn features_corrupt_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let args = feature_resources(dir.path(), true);
    fs::write(dir.path().join("stats.csv"), "lang,word_count,subword_count,continued_word_count\nen,100,120,15\nde,abc,140,30\n").unwrap();
    let o = xferlens(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stats.csv:3:"), "{err}");
}
