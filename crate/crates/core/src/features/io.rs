use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::data::{open_csv, parse_float, DataError, LangId};

use super::{FeatureError, TokenizationStats, TypologyKind, TypologyVector, VocabSet, WalsTable};

fn io_err(path: &Path, source: std::io::Error) -> FeatureError {
    FeatureError::Data(DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One token per line; blank lines are skipped.
pub fn read_vocab(path: &Path, lang: LangId) -> Result<VocabSet, FeatureError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let tokens: BTreeSet<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    VocabSet::new(lang, tokens)
}

/// Reads every `<lang>.txt` file in `dir` as that language's vocabulary.
pub fn read_vocab_dir(dir: &Path) -> Result<BTreeMap<LangId, VocabSet>, FeatureError> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(dir, e))?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let lang = LangId::new(stem)?;
        out.insert(lang.clone(), read_vocab(&path, lang)?);
    }
    Ok(out)
}

/// `lang,kind,d0,d1,...` with empty cells for unobserved dimensions. Every
/// kind must have the same dimensionality for all languages.
pub fn read_typology(
    path: &Path,
) -> Result<BTreeMap<(LangId, TypologyKind), TypologyVector>, FeatureError> {
    let csv = open_csv(path)?;
    let dims = csv.expect_prefix(&["lang", "kind"])?.len();
    if dims == 0 {
        return Err(csv.schema("no dimension columns").into());
    }
    let mut parsed = Vec::with_capacity(csv.rows.len());
    let mut widths: BTreeMap<TypologyKind, usize> = BTreeMap::new();
    for (line, row) in &csv.rows {
        let at = |e: DataError| csv.at_line(*line, e);
        let lang = LangId::new(&row[0]).map_err(at)?;
        let kind = TypologyKind::parse(&row[1])
            .ok_or_else(|| at(DataError::InvalidNumber(format!("unknown typology kind {}", &row[1]))))?;
        let mut values = Vec::with_capacity(dims);
        for cell in row.iter().skip(2) {
            values.push(if cell.is_empty() {
                None
            } else {
                Some(parse_float(cell).map_err(at)?)
            });
        }
        // trailing unobserved columns beyond a kind's width are padding
        let width = values.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
        let w = widths.entry(kind).or_insert(0);
        *w = (*w).max(width);
        parsed.push((*line, lang, kind, values));
    }
    let mut out = BTreeMap::new();
    for (line, lang, kind, mut values) in parsed {
        values.truncate(widths[&kind]);
        let v = TypologyVector::new(lang.clone(), kind, values)
            .map_err(|e| csv.at_line(line, DataError::InvalidNumber(e.to_string())))?;
        if out.insert((lang.clone(), kind), v).is_some() {
            return Err(csv
                .at_line(line, DataError::DuplicateRecord(format!("{lang}/{kind}")))
                .into());
        }
    }
    Ok(out)
}

/// `lang,feature_value` long format.
pub fn read_wals(path: &Path) -> Result<WalsTable, FeatureError> {
    let csv = open_csv(path)?;
    csv.expect_exact(&["lang", "feature_value"])?;
    let mut rows: BTreeMap<LangId, BTreeSet<String>> = BTreeMap::new();
    for (line, row) in &csv.rows {
        let lang = LangId::new(&row[0]).map_err(|e| csv.at_line(*line, e))?;
        let fv = row[1].trim();
        if fv.is_empty() {
            return Err(csv
                .at_line(*line, DataError::InvalidNumber("empty feature value".into()))
                .into());
        }
        rows.entry(lang).or_default().insert(fv.to_owned());
    }
    WalsTable::new(rows)
}

/// `lang,word_count,subword_count,continued_word_count`.
pub fn read_corpus_stats(path: &Path) -> Result<BTreeMap<LangId, TokenizationStats>, FeatureError> {
    let csv = open_csv(path)?;
    csv.expect_exact(&["lang", "word_count", "subword_count", "continued_word_count"])?;
    let mut out = BTreeMap::new();
    for (line, row) in &csv.rows {
        let parse = |i: usize| -> Result<u64, FeatureError> {
            row[i]
                .parse()
                .map_err(|_| csv.at_line(*line, DataError::InvalidNumber(row[i].to_owned())).into())
        };
        let lang = LangId::new(&row[0]).map_err(|e| csv.at_line(*line, e))?;
        let stats = TokenizationStats::new(&lang, parse(1)?, parse(2)?, parse(3)?).map_err(|e| {
            FeatureError::from(csv.at_line(*line, DataError::InvalidNumber(e.to_string())))
        })?;
        out.insert(lang, stats);
    }
    Ok(out)
}
