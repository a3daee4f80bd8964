use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{csv_string, Dataset, TaskId};

use super::protocol::{run_protocol, EvalReport, Protocol, LOW_DATA_MAX_TARGETS};
use super::{EvalError, ModelSpec};

/// One row per predicted record across all reports.
pub fn records_csv(reports: &[EvalReport], preamble: &[String]) -> Result<String, EvalError> {
    let mut rows = Vec::new();
    for rep in reports {
        for task in &rep.tasks {
            for fold in &task.folds {
                let heldout = fold.heldout.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("+");
                for r in &fold.records {
                    rows.push(vec![
                        rep.model.kind.to_string(),
                        rep.protocol.to_string(),
                        task.task.to_string(),
                        heldout.clone(),
                        r.pivot.to_string(),
                        r.target.to_string(),
                        r.y.to_string(),
                        r.yhat.to_string(),
                        r.abs_err.to_string(),
                    ]);
                }
            }
        }
    }
    let header = ["model", "protocol", "task", "heldout", "pivot", "target", "y", "yhat", "abs_err"];
    Ok(csv_string(preamble, &header, rows)?)
}

/// Per-task MAE for every (model, protocol): the data behind a bar chart of
/// error by model for each task.
pub fn fig1_csv(reports: &[EvalReport], preamble: &[String]) -> Result<String, EvalError> {
    let rows = reports.iter().flat_map(|rep| {
        rep.tasks.iter().map(move |t| {
            vec![
                rep.model.kind.to_string(),
                rep.protocol.to_string(),
                t.task.to_string(),
                t.mae.to_string(),
            ]
        })
    });
    Ok(csv_string(preamble, &["model", "protocol", "task", "mae"], rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub model: String,
    pub task: TaskId,
    pub n_helpers: usize,
    pub mae: f64,
    /// `mae` divided by the largest MAE of this (model, task) curve.
    pub scaled_mae: f64,
}

/// Error on `task` as helper tasks are added one at a time, in sorted task
/// order, from none up to all of them.
pub fn helper_sweep(ds: &Dataset, spec: &ModelSpec, task: &TaskId, protocol: Protocol) -> Result<Vec<SweepPoint>, EvalError> {
    let helpers: Vec<&TaskId> = ds.tasks.iter().filter(|t| *t != task).collect();
    let mut maes = Vec::with_capacity(helpers.len() + 1);
    for k in 0..=helpers.len() {
        let keep = &helpers[..k];
        let sub = ds.with_records(
            ds.records
                .iter()
                .filter(|r| &r.task == task || keep.contains(&&r.task))
                .cloned()
                .collect(),
        );
        maes.push(run_protocol(&sub, spec, task, protocol)?.mae);
    }
    let max = maes.iter().cloned().fold(0.0, f64::max);
    Ok(maes
        .into_iter()
        .enumerate()
        .map(|(k, mae)| SweepPoint {
            model: spec.kind.to_string(),
            task: task.clone(),
            n_helpers: k,
            mae,
            scaled_mae: if max > 0.0 { mae / max } else { 0.0 },
        })
        .collect())
}

pub fn fig2_csv(points: &[SweepPoint], preamble: &[String]) -> Result<String, EvalError> {
    let rows = points.iter().map(|p| {
        vec![
            p.model.clone(),
            p.task.to_string(),
            p.n_helpers.to_string(),
            p.mae.to_string(),
            p.scaled_mae.to_string(),
        ]
    });
    Ok(csv_string(preamble, &["model", "task", "n_helpers", "mae", "scaled_mae"], rows)?)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into())
}

/// Text table of MAE x 100 with one row per task and one column per model,
/// followed by the overall and low-data averages. One block per
/// (multilingual model, protocol).
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut groups: BTreeMap<(&str, Protocol), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.mmlm.as_str(), r.protocol)).or_default().push(r);
    }
    let mut out = String::new();
    for ((mmlm, protocol), reps) in groups {
        let mut tasks: BTreeMap<&TaskId, usize> = BTreeMap::new();
        for r in &reps {
            for t in &r.tasks {
                tasks.insert(&t.task, t.n_targets);
            }
            for f in &r.failures {
                tasks.entry(&f.task).or_insert(0);
            }
        }
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Task".to_owned()];
        header.extend(reps.iter().map(|r| r.model.kind.to_string()));
        rows.push(header);
        for (task, n) in &tasks {
            let mut row = vec![if *n > 0 { format!("{task} (|T|={n})") } else { task.to_string() }];
            for r in &reps {
                let mae = r.tasks.iter().find(|t| &&t.task == task).map(|t| t.mae);
                let failed = r.failures.iter().any(|f| &&f.task == task);
                row.push(if failed { "fail".into() } else { cell(mae) });
            }
            rows.push(row);
        }
        let mut avg = vec!["Average".to_owned()];
        avg.extend(reps.iter().map(|r| cell(r.macro_mae)));
        rows.push(avg);
        let mut low = vec![format!("Average (|T|<={LOW_DATA_MAX_TARGETS})")];
        low.extend(reps.iter().map(|r| cell(r.low_data_mae)));
        rows.push(low);

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let _ = writeln!(out, "{mmlm} / {protocol}: MAE x 100");
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 || i + 3 == rows.len() {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        out.push('\n');
    }
    out
}
