//! Score files: comma-separated rows `label,s_0,...,s_{n-1}`.
//!
//! A first row whose first field is not a number is taken as a header.
//! Blank lines and lines starting with `#` are skipped. Errors name the
//! offending line.

use std::io::Read;

use smooth_topk::{Error, Result, ScoreBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub batch: ScoreBatch,
    pub header: Option<Vec<String>>,
}

fn data_err<T>(line: u64, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Data(format!("line {line}: {msg}")))
}

pub fn parse<R: Read>(mut reader: R) -> Result<ScoreFile> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Data(format!("cannot read scores: {e}")))?;
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let mut fields = content.split(',').map(str::trim);
        let first = fields.next().unwrap_or("");
        if !seen_content && first.parse::<f64>().is_err() {
            seen_content = true;
            header = Some(content.split(',').map(|f| f.trim().to_owned()).collect());
            continue;
        }
        seen_content = true;
        let Ok(label) = first.parse::<usize>() else {
            return data_err(line, format!("label '{first}' is not a nonnegative integer"));
        };
        let mut scores = Vec::new();
        for (col, field) in fields.enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => scores.push(v),
                _ => return data_err(line, format!("column {}: '{field}' is not a finite number", col + 2)),
            }
        }
        if scores.is_empty() {
            return data_err(line, "row has a label but no scores");
        }
        if let Some(prev) = rows.first() {
            if prev.len() != scores.len() {
                return data_err(line, format!("expected {} scores, found {}", prev.len(), scores.len()));
            }
        }
        if label >= scores.len() {
            return data_err(line, format!("label {label} out of range for {} classes", scores.len()));
        }
        rows.push(scores);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(ScoreFile { batch: ScoreBatch::from_rows(&rows, labels)?, header })
}
