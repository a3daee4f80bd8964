use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use csv::StringRecord;

use super::types::{
    Dataset, FeatureName, FeatureVector, LangId, LanguageMeta, PerformanceRecord, TaskId,
    NUM_FEATURES,
};
use super::DataError;

const SCORES_HEADER: [&str; 5] = ["model", "task", "pivot", "target", "score"];
const META_HEADER: [&str; 3] = ["lang", "class", "pretrain_words"];

/// Parsed CSV rows with their 1-based line numbers.
pub(crate) struct CsvRows {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<(u64, StringRecord)>,
}

impl CsvRows {
    pub fn at_line(&self, line: u64, err: DataError) -> DataError {
        DataError::AtLine {
            path: self.path.clone(),
            line,
            source: Box::new(err),
        }
    }

    pub fn schema(&self, msg: impl Into<String>) -> DataError {
        DataError::Schema {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }

    /// Requires the header to start with `prefix`; returns the remaining columns.
    pub fn expect_prefix(&self, prefix: &[&str]) -> Result<&[String], DataError> {
        if self.header.len() < prefix.len()
            || self.header.iter().zip(prefix).any(|(h, p)| h != p)
        {
            return Err(self.schema(format!(
                "expected header starting with `{}`, found `{}`",
                prefix.join(","),
                self.header.join(",")
            )));
        }
        Ok(&self.header[prefix.len()..])
    }

    pub fn expect_exact(&self, header: &[&str]) -> Result<(), DataError> {
        let extra = self.expect_prefix(header)?;
        if !extra.is_empty() {
            return Err(self.schema(format!("unexpected column(s): {}", extra.join(","))));
        }
        Ok(())
    }
}

/// Reads a headed CSV file fully. Rows whose field count differs from the
/// header are rejected with their line number.
pub(crate) fn open_csv(path: &Path) -> Result<CsvRows, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        DataError::Csv {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        }
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(CsvRows {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

/// Locale-independent decimal parse.
pub fn parse_float(s: &str) -> Result<f64, DataError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| DataError::InvalidNumber(s.to_owned()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DataError::InvalidNumber(s.to_owned()))
    }
}

fn parse_optional(s: &str) -> Result<Option<f64>, DataError> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_float(s).map(Some)
    }
}

fn read_scores(path: &Path) -> Result<Vec<(u64, PerformanceRecord)>, DataError> {
    let csv = open_csv(path)?;
    let extra = csv.expect_prefix(&SCORES_HEADER)?;
    let has_scale = match extra {
        [] => false,
        [s] if s == "scale" => true,
        _ => return Err(csv.schema(format!("unexpected column(s): {}", extra.join(",")))),
    };
    let mut out = Vec::with_capacity(csv.rows.len());
    for (line, row) in &csv.rows {
        let parse_row = || -> Result<PerformanceRecord, DataError> {
            let task = TaskId::new(&row[1])?;
            let pivot = LangId::new(&row[2])?;
            let target = LangId::new(&row[3])?;
            let raw = parse_float(&row[4])?;
            let divisor = match if has_scale { &row[5] } else { "" } {
                "" | "unit" => 1.0,
                "percent" => 100.0,
                other => return Err(DataError::InvalidScale(other.to_owned())),
            };
            PerformanceRecord::new(&row[0], task, pivot, target, raw / divisor)
        };
        let rec = parse_row().map_err(|e| csv.at_line(*line, e))?;
        out.push((*line, rec));
    }
    Ok(out)
}

fn read_features(path: &Path) -> Result<BTreeMap<(LangId, LangId), FeatureVector>, DataError> {
    let csv = open_csv(path)?;
    let mut header = vec!["pivot", "target"];
    header.extend(FeatureName::ALL.iter().map(|f| f.as_str()));
    csv.expect_exact(&header)?;
    let mut out = BTreeMap::new();
    for (line, row) in &csv.rows {
        let parse_row = || -> Result<FeatureVector, DataError> {
            let pivot = LangId::new(&row[0])?;
            let target = LangId::new(&row[1])?;
            let mut values = [None; NUM_FEATURES];
            for (i, slot) in values.iter_mut().enumerate() {
                *slot = parse_optional(&row[2 + i])?;
            }
            FeatureVector::new(pivot, target, values)
        };
        let fv = parse_row().map_err(|e| csv.at_line(*line, e))?;
        let key = fv.pair();
        if out.insert(key, fv).is_some() {
            return Err(csv.at_line(
                *line,
                DataError::DuplicateRecord(format!("{}->{}", &row[0], &row[1])),
            ));
        }
    }
    Ok(out)
}

/// Reads `lang,class,pretrain_words`.
pub fn read_meta(path: &Path) -> Result<BTreeMap<LangId, LanguageMeta>, DataError> {
    let csv = open_csv(path)?;
    csv.expect_exact(&META_HEADER)?;
    let mut out = BTreeMap::new();
    for (line, row) in &csv.rows {
        let parse_row = || -> Result<LanguageMeta, DataError> {
            let lang = LangId::new(&row[0])?;
            let class: i64 = row[1]
                .parse()
                .map_err(|_| DataError::InvalidNumber(row[1].to_owned()))?;
            if !(0..=5).contains(&class) {
                return Err(DataError::InvalidClass(class));
            }
            LanguageMeta::new(lang, class as u8, parse_float(&row[2])?)
        };
        let m = parse_row().map_err(|e| csv.at_line(*line, e))?;
        if out.contains_key(&m.lang) {
            return Err(csv.at_line(*line, DataError::DuplicateRecord(m.lang.to_string())));
        }
        out.insert(m.lang.clone(), m);
    }
    Ok(out)
}

/// Loads and validates a dataset from the scores, features and (optional)
/// metadata CSVs. Row-level failures carry the file path and line number.
pub fn load_dataset(
    scores_path: &Path,
    features_path: &Path,
    meta_path: Option<&Path>,
) -> Result<Dataset, DataError> {
    let scores = read_scores(scores_path)?;
    let features = read_features(features_path)?;
    let meta = match meta_path {
        Some(p) => read_meta(p)?,
        None => BTreeMap::new(),
    };
    let mut seen = std::collections::BTreeSet::new();
    for (line, r) in &scores {
        let at = |e| DataError::AtLine {
            path: scores_path.to_path_buf(),
            line: *line,
            source: Box::new(e),
        };
        if !seen.insert((&r.model, &r.task, &r.pivot, &r.target)) {
            return Err(at(DataError::DuplicateRecord(format!(
                "{}/{}/{}->{}",
                r.model, r.task, r.pivot, r.target
            ))));
        }
        if !features.contains_key(&r.pair()) {
            return Err(at(DataError::MissingFeatures(format!(
                "{}->{}",
                r.pivot, r.target
            ))));
        }
    }
    Dataset::new(scores.into_iter().map(|(_, r)| r).collect(), features, meta)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes a headed CSV table; every `preamble` line is written first as
/// a `# ` comment, which the readers in this crate skip.
pub fn csv_string<I, R>(preamble: &[String], header: &[&str], rows: I) -> Result<String, DataError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut buf = Vec::new();
    for line in preamble {
        buf.extend_from_slice(format!("# {line}\n").as_bytes());
    }
    let mut w = csv::Writer::from_writer(buf);
    let ser = |e: csv::Error| DataError::Csv {
        path: PathBuf::new(),
        line: 0,
        msg: e.to_string(),
    };
    w.write_record(header).map_err(ser)?;
    for row in rows {
        w.write_record(row).map_err(ser)?;
    }
    let buf = w.into_inner().map_err(|e| ser(e.into_error().into()))?;
    Ok(String::from_utf8(buf).expect("CSV input was UTF-8"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes records in unit scale. `f64` display output is the shortest
/// representation that parses back to the same value.
pub fn write_scores(path: &Path, records: &[PerformanceRecord], preamble: &[String]) -> Result<(), DataError> {
    let rows = records.iter().map(|r| {
        [
            r.model.clone(),
            r.task.to_string(),
            r.pivot.to_string(),
            r.target.to_string(),
            r.score.to_string(),
        ]
    });
    write_text(path, &csv_string(preamble, &SCORES_HEADER, rows)?)
}

pub fn write_features<'a>(
    path: &Path,
    features: impl IntoIterator<Item = &'a FeatureVector>,
    preamble: &[String],
) -> Result<(), DataError> {
    let mut header = vec!["pivot", "target"];
    header.extend(FeatureName::ALL.iter().map(|n| n.as_str()));
    let rows = features.into_iter().map(|fv| {
        let mut row = vec![fv.pivot.to_string(), fv.target.to_string()];
        row.extend(fv.values().iter().map(|v| opt(*v)));
        row
    });
    write_text(path, &csv_string(preamble, &header, rows)?)
}

pub fn write_meta<'a>(
    path: &Path,
    meta: impl IntoIterator<Item = &'a LanguageMeta>,
    preamble: &[String],
) -> Result<(), DataError> {
    let rows = meta.into_iter().map(|m| {
        [
            m.lang.to_string(),
            m.resource_class.to_string(),
            m.pretrain_words.to_string(),
        ]
    });
    write_text(path, &csv_string(preamble, &META_HEADER, rows)?)
}
