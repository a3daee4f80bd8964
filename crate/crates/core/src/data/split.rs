use super::types::{Dataset, LangId, PerformanceRecord, TaskId};
use super::DataError;

/// One leave-one-language-out fold for an evaluation task.
#[derive(Debug, Clone)]
pub struct LoloSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub held_out: LangId,
}

/// Train on high-resource targets (classes 4-5), test on classes <= 3.
#[derive(Debug, Clone)]
pub struct LlroSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// One split per distinct target language of `eval_task`. The held-out
/// language's eval-task records form the test side; helper tasks keep all of
/// their records, including those of the held-out language.
pub fn make_lolo_splits(ds: &Dataset, eval_task: &TaskId) -> Result<Vec<LoloSplit>, DataError> {
    if !ds.tasks.contains(eval_task) {
        return Err(DataError::UnknownTask(eval_task.to_string()));
    }
    let targets = ds.targets(eval_task);
    if targets.len() < 2 {
        return Err(DataError::TooFewTargets {
            task: eval_task.to_string(),
            count: targets.len(),
        });
    }
    Ok(targets
        .into_iter()
        .map(|held_out| {
            let (test, train): (Vec<PerformanceRecord>, Vec<PerformanceRecord>) = ds
                .records
                .iter()
                .cloned()
                .partition(|r| &r.task == eval_task && r.target == held_out);
            LoloSplit {
                train: ds.with_records(train),
                test: ds.with_records(test),
                held_out,
            }
        })
        .collect())
}

pub fn make_llro_split(ds: &Dataset, eval_task: &TaskId) -> Result<LlroSplit, DataError> {
    if !ds.tasks.contains(eval_task) {
        return Err(DataError::UnknownTask(eval_task.to_string()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in &ds.records {
        if &r.task != eval_task {
            train.push(r.clone());
            continue;
        }
        let meta = ds
            .meta
            .get(&r.target)
            .ok_or_else(|| DataError::MissingTaxonomy(r.target.to_string()))?;
        if meta.is_high_resource() {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    if test.is_empty() {
        return Err(DataError::EmptySplitSide("test"));
    }
    if !train.iter().any(|r| &r.task == eval_task) {
        return Err(DataError::EmptySplitSide("train"));
    }
    Ok(LlroSplit {
        train: ds.with_records(train),
        test: ds.with_records(test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureVector, LanguageMeta, NUM_FEATURES};
    use std::collections::{BTreeMap, BTreeSet};

    fn lang(s: &str) -> LangId {
        LangId::new(s).unwrap()
    }

    fn task(s: &str) -> TaskId {
        TaskId::new(s).unwrap()
    }

    fn dataset(rows: &[(&str, &str, f64)], classes: &[(&str, u8)]) -> Dataset {
        let mut features = BTreeMap::new();
        let records = rows
            .iter()
            .map(|(t, tgt, y)| {
                let fv = FeatureVector::new(lang("en"), lang(tgt), [None; NUM_FEATURES])
                    .unwrap();
                features.insert(fv.pair(), fv);
                PerformanceRecord::new("m", task(t), lang("en"), lang(tgt), *y).unwrap()
            })
            .collect();
        let meta = classes
            .iter()
            .map(|(l, c)| (lang(l), LanguageMeta::new(lang(l), *c, 1e6).unwrap()))
            .collect();
        Dataset::new(records, features, meta).unwrap()
    }

    fn targets(ds: &Dataset, t: &str) -> BTreeSet<String> {
        ds.targets(&task(t)).into_iter().map(|l| l.to_string()).collect()
    }

    #[test]
    fn lolo_keeps_helper_tasks_whole() {
        let ds = dataset(
            &[
                ("A", "de", 0.5),
                ("A", "hi", 0.4),
                ("B", "de", 0.6),
                ("B", "hi", 0.3),
                ("B", "sw", 0.2),
            ],
            &[],
        );
        let splits = make_lolo_splits(&ds, &task("A")).unwrap();
        assert_eq!(splits.len(), 2);
        let de = splits.iter().find(|s| s.held_out == lang("de")).unwrap();
        assert_eq!(targets(&de.train, "A"), BTreeSet::from(["hi".to_owned()]));
        assert_eq!(de.train.task_records(&task("B")).count(), 3);
        assert_eq!(de.test.records.len(), 1);
        assert_eq!(de.test.records[0].target, lang("de"));
    }

    #[test]
    fn lolo_single_task_sizes() {
        let ds = dataset(&[("A", "de", 0.5), ("A", "hi", 0.4), ("A", "sw", 0.1)], &[]);
        let splits = make_lolo_splits(&ds, &task("A")).unwrap();
        assert_eq!(splits.len(), 3);
        assert!(splits.iter().all(|s| s.train.records.len() == 2));
    }

    #[test]
    fn lolo_needs_two_targets() {
        let ds = dataset(&[("A", "de", 0.5)], &[]);
        assert!(matches!(
            make_lolo_splits(&ds, &task("A")),
            Err(DataError::TooFewTargets { count: 1, .. })
        ));
        assert!(matches!(
            make_lolo_splits(&ds, &task("Z")),
            Err(DataError::UnknownTask(_))
        ));
    }

    #[test]
    fn llro_examples() {
        let ds = dataset(
            &[("A", "en-gb", 0.9), ("A", "de", 0.8), ("A", "sw", 0.3)],
            &[("en-gb", 5), ("de", 5), ("sw", 1)],
        );
        let s = make_llro_split(&ds, &task("A")).unwrap();
        assert_eq!(targets(&s.train, "A"), BTreeSet::from(["en-gb".into(), "de".into()]));
        assert_eq!(targets(&s.test, "A"), BTreeSet::from(["sw".into()]));

        let ds = dataset(
            &[("A", "fr", 0.9), ("A", "hi", 0.8), ("A", "bn", 0.3)],
            &[("fr", 5), ("hi", 3), ("bn", 3)],
        );
        let s = make_llro_split(&ds, &task("A")).unwrap();
        assert_eq!(targets(&s.test, "A"), BTreeSet::from(["hi".into(), "bn".into()]));
    }

    #[test]
    fn llro_errors() {
        let ds = dataset(&[("A", "fr", 0.9), ("A", "de", 0.8)], &[("fr", 5), ("de", 5)]);
        assert!(matches!(
            make_llro_split(&ds, &task("A")),
            Err(DataError::EmptySplitSide("test"))
        ));
        let ds = dataset(&[("A", "fr", 0.9), ("A", "sw", 0.8)], &[("fr", 5)]);
        assert!(matches!(
            make_llro_split(&ds, &task("A")),
            Err(DataError::MissingTaxonomy(_))
        ));
        let ds = dataset(&[("A", "yo", 0.9), ("A", "sw", 0.8)], &[("yo", 2), ("sw", 1)]);
        assert!(matches!(
            make_llro_split(&ds, &task("A")),
            Err(DataError::EmptySplitSide("train"))
        ));
    }

    #[test]
    fn llro_helpers_retain_low_resource() {
        let ds = dataset(
            &[("A", "fr", 0.9), ("A", "sw", 0.3), ("B", "sw", 0.4), ("B", "fr", 0.7)],
            &[("fr", 5), ("sw", 1)],
        );
        let s = make_llro_split(&ds, &task("A")).unwrap();
        assert_eq!(s.train.task_records(&task("B")).count(), 2);
    }
}
