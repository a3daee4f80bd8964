use crate::data::{Dataset, LangId, TaskId};

use super::BaselineError;

/// Average score within the task: mean over the other training targets of
/// `task` for this pivot. The query target's own score is never read.
pub fn predict_awt(
    train: &Dataset,
    task: &TaskId,
    pivot: &LangId,
    target: &LangId,
) -> Result<f64, BaselineError> {
    let scores: Vec<f64> = train
        .task_records(task)
        .filter(|r| &r.pivot == pivot && &r.target != target)
        .map(|r| r.score)
        .collect();
    if scores.is_empty() {
        return Err(BaselineError::NoOtherTargets {
            task: task.to_string(),
            pivot: pivot.to_string(),
        });
    }
    Ok(mean(&scores))
}

/// Average score across tasks: mean of the target's scores in every other
/// task where the `(pivot, target)` record exists.
pub fn predict_aat(
    train: &Dataset,
    task: &TaskId,
    pivot: &LangId,
    target: &LangId,
) -> Result<f64, BaselineError> {
    let scores: Vec<f64> = train
        .records
        .iter()
        .filter(|r| &r.task != task && &r.pivot == pivot && &r.target == target)
        .map(|r| r.score)
        .collect();
    if scores.is_empty() {
        return Err(BaselineError::NoHelperScores {
            pivot: pivot.to_string(),
            target: target.to_string(),
        });
    }
    Ok(mean(&scores))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
