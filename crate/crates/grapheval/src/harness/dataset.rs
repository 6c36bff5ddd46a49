//! Line-delimited JSON datasets: one `{id, context, output, label?}`
//! object per line, UTF-8. Blank lines are skipped.

use std::collections::HashSet;
use std::path::Path;

use grapheval_core::{Example, Label};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON record: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}` must be a string")]
    NotAString { line: usize, field: &'static str },
    #[error("line {line}: label must be 0 or 1")]
    BadLabel { line: usize },
    #[error("line {line}: {message}")]
    InvalidExample { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("dataset has no examples")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Checks the non-empty and unique-id invariants.
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Result<Self, DatasetError> {
        if examples.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::new();
        for (i, ex) in examples.iter().enumerate() {
            if !seen.insert(ex.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    line: i + 1,
                    id: ex.id.clone(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            examples,
        })
    }

    pub fn is_labeled(&self) -> bool {
        self.examples.iter().all(|e| e.label.is_some())
    }
}

fn text_field(obj: &Map<String, Value>, line: usize, field: &'static str) -> Result<String, DatasetError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(DatasetError::MissingField { line, field }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(DatasetError::NotAString { line, field }),
    }
}

fn parse_record(raw: &str, line: usize) -> Result<Example, DatasetError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| DatasetError::Json {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(DatasetError::Json {
            line,
            message: "record is not an object".into(),
        });
    };
    let id = text_field(&obj, line, "id")?;
    let context = text_field(&obj, line, "context")?;
    let output = text_field(&obj, line, "output")?;
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .and_then(|n| Label::from_u64(n).ok())
                .ok_or(DatasetError::BadLabel { line })?,
        ),
    };
    Example::new(id, context, output, label).map_err(|e| DatasetError::InvalidExample {
        line,
        message: e.to_string(),
    })
}

/// Parses dataset text; `name` becomes the dataset name.
pub fn parse_dataset(name: &str, text: &str) -> Result<Dataset, DatasetError> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ex = parse_record(raw, line)?;
        if !seen.insert(ex.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: ex.id });
        }
        examples.push(ex);
    }
    Dataset::new(name, examples)
}

/// Loads a dataset file. The name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dataset(&name, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    /// Fraction of examples labelled 0; absent unless every example is labelled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_ratio: Option<f64>,
    pub avg_output_words: f64,
    pub avg_context_words: f64,
}

fn words(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let count = ds.examples.len();
    let n = count.max(1) as f64;
    let label_ratio = ds.is_labeled().then(|| {
        ds.examples.iter().filter(|e| e.label == Some(Label::Consistent)).count() as f64 / n
    });
    DatasetStats {
        count,
        label_ratio,
        avg_output_words: ds.examples.iter().map(|e| words(&e.output)).sum::<usize>() as f64 / n,
        avg_context_words: ds.examples.iter().map(|e| words(&e.context)).sum::<usize>() as f64 / n,
    }
}
