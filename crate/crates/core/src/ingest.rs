//! Loading raw interaction dumps, action screening and train/test splitting.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sampling::seeded_permutation;
use crate::taxonomy::TaxonomyLabel;
use crate::text::clean_text;
use crate::types::{Action, ProductRecord};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("every line of {path} is malformed ({count} diagnostics)")]
    AllLinesMalformed { path: PathBuf, count: usize },
    #[error("cannot split an empty record list")]
    EmptyInput,
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A per-line rejection, written to the `.errors.jsonl` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub diagnostics: Vec<LineDiagnostic>,
}

/// A platform help-center question with its official answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answer: String,
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })
}

fn field_text(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => {
            let cleaned = clean_text(s);
            Ok((!cleaned.is_empty()).then_some(cleaned))
        }
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(other) => Err(format!("field {key:?} must be a string, got {other}")),
    }
}

fn parse_record(line: &str) -> Result<ProductRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;
    let id = field_text(obj, "id")?.ok_or("missing id")?;
    let title = field_text(obj, "title")?.ok_or("title empty after cleaning")?;
    let taxonomy_raw = field_text(obj, "taxonomy")?.ok_or("missing taxonomy")?;
    let taxonomy: TaxonomyLabel = taxonomy_raw.parse().map_err(|e| format!("{e}"))?;
    let action_raw = field_text(obj, "action")?.ok_or("missing action")?;
    let action: Action = action_raw.parse()?;
    Ok(ProductRecord {
        id,
        title,
        description: field_text(obj, "description")?,
        taxonomy,
        query: field_text(obj, "query")?,
        action,
    })
}

fn parse_lines<T>(
    path: &Path,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Loaded<T>, IngestError> {
    let content = read(path)?;
    let mut loaded = Loaded { items: Vec::new(), diagnostics: Vec::new() };
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse(line) {
            Ok(item) => loaded.items.push(item),
            Err(reason) => loaded.diagnostics.push(LineDiagnostic { line: idx + 1, reason }),
        }
    }
    if loaded.items.is_empty() && !loaded.diagnostics.is_empty() {
        return Err(IngestError::AllLinesMalformed {
            path: path.to_path_buf(),
            count: loaded.diagnostics.len(),
        });
    }
    Ok(loaded)
}

/// Load a JSONL interaction dump. Text fields are cleaned; bad lines are
/// collected as diagnostics and skipped. Order is preserved.
pub fn load_interactions(path: &Path) -> Result<Loaded<ProductRecord>, IngestError> {
    parse_lines(path, parse_record)
}

/// Load help-center Q&A pairs: `{id, question, answer}` per line.
pub fn load_qa_pairs(path: &Path) -> Result<Loaded<QaPair>, IngestError> {
    parse_lines(path, |line| {
        let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
        let obj = value.as_object().ok_or("line is not a JSON object")?;
        Ok(QaPair {
            id: field_text(obj, "id")?.ok_or("missing id")?,
            question: field_text(obj, "question")?.ok_or("missing question")?,
            answer: field_text(obj, "answer")?.ok_or("missing answer")?,
        })
    })
}

/// `data/interactions.jsonl` -> `data/interactions.errors.jsonl`
pub fn sidecar_path(input: &Path, dir: Option<&Path>) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let name = format!("{stem}.errors.jsonl");
    match dir {
        Some(d) => d.join(name),
        None => input.with_file_name(name),
    }
}

pub fn write_diagnostics(path: &Path, diagnostics: &[LineDiagnostic]) -> Result<(), IngestError> {
    let wrap = |source| IngestError::Write { path: path.to_path_buf(), source };
    let mut file = fs::File::create(path).map_err(wrap)?;
    for d in diagnostics {
        let line = serde_json::to_string(d).expect("diagnostic serializes");
        writeln!(file, "{line}").map_err(wrap)?;
    }
    Ok(())
}

/// Drop records whose action is `no_action`, preserving order.
pub fn filter_by_action(records: &[ProductRecord]) -> Vec<ProductRecord> {
    records.iter().filter(|r| r.action != Action::NoAction).cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T = ProductRecord> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
    pub ratio: f64,
}

/// Seeded shuffle, then the first `ceil(ratio * n)` items go to train.
pub fn split<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<DatasetSplit<T>, IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::InvalidRatio(ratio));
    }
    if items.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let n = items.len();
    // tolerance keeps 0.8 * 10 from rounding up to 9
    let n_train = ((ratio * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
    let perm = seeded_permutation(n, seed);
    let (train_idx, test_idx) = perm.split_at(n_train);
    Ok(DatasetSplit {
        train: train_idx.iter().map(|&i| items[i].clone()).collect(),
        test: test_idx.iter().map(|&i| items[i].clone()).collect(),
        seed,
        ratio,
    })
}

/// Ids that occur more than once across train and test. Empty for a valid split.
pub fn overlapping_ids(split: &DatasetSplit) -> Vec<String> {
    let mut seen = HashSet::new();
    split
        .train
        .iter()
        .chain(&split.test)
        .filter(|r| !seen.insert(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect()
}
