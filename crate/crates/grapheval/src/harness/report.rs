//! Run reports and their on-disk form.
//!
//! Reports are pretty-printed JSON with a trailing newline. Struct fields
//! serialize in declaration order and maps are sorted, so equal reports are
//! byte-identical files.

use std::io::Write;
use std::path::Path;

use grapheval_core::metrics::{balanced_accuracy, ConfusionMatrix, RougeScore};
use grapheval_core::{
    CorrectionConfig, CorrectionReport, Corrector, DetectionConfig, DetectionReport, ExtractConfig, Label,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Detect,
    Correct,
    Eval,
}

/// Which services produced the numbers. Never holds credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSummary {
    pub llm_backend: String,
    pub llm_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_endpoint: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub nli_backend: String,
    pub nli_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli_endpoint: Option<String>,
}

/// The effective settings of a run, echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub detection: DetectionConfig,
    pub extraction: ExtractConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrector: Option<Corrector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionConfig>,
    pub backends: BackendSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Detect,
    Correct,
    Redetect,
}

/// An example that could not be processed. It is excluded from metrics
/// but always listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub example_id: String,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// Gold label, when the dataset has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub report: DetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub evaluated: usize,
    pub failed: usize,
    pub flagged: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    /// Balanced accuracy in percent, over labelled evaluated examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRun {
    pub summary: DetectionSummary,
    pub records: Vec<DetectionRecord>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

/// One initially flagged example through correction and re-detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub example_id: String,
    pub initial: DetectionReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redetection: Option<DetectionReport>,
    /// Corrected output against the original.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge: Option<RougeTriple>,
    pub believed_corrected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Failure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeMeans {
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rouge_l_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub initially_flagged: usize,
    pub believed_corrected: usize,
    pub failed: usize,
    /// `100 * believed_corrected / initially_flagged`; absent when nothing was flagged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub believed_corrected_pct: Option<f64>,
    /// Means over examples whose correction and re-detection both succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge: Option<RougeMeans>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRun {
    pub summary: CorrectionSummary,
    pub records: Vec<CorrectionRecord>,
    /// Examples whose initial detection failed; they are never corrected.
    pub detection_failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub dataset: String,
    pub kind: RunKind,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionRun>,
}

pub fn summarize_detection(records: &[DetectionRecord], failures: &[Failure]) -> DetectionSummary {
    let mut cm = ConfusionMatrix::default();
    for r in records {
        if let Some(label) = r.label {
            cm.record(r.report.verdict, label);
        }
    }
    let labelled = cm.total() > 0;
    DetectionSummary {
        evaluated: records.len(),
        failed: failures.len(),
        flagged: records.iter().filter(|r| r.report.verdict == Label::Inconsistent).count(),
        confusion: labelled.then_some(cm),
        balanced_accuracy_pct: balanced_accuracy(&cm).ok().map(|b| 100.0 * b),
    }
}

pub fn summarize_correction(records: &[CorrectionRecord]) -> CorrectionSummary {
    let flagged = records.len();
    let corrected = records.iter().filter(|r| r.believed_corrected).count();
    let scored: Vec<&RougeTriple> = records.iter().filter_map(|r| r.rouge.as_ref()).collect();
    let mean = |f: fn(&RougeTriple) -> f64| scored.iter().map(|r| f(r)).sum::<f64>() / scored.len() as f64;
    CorrectionSummary {
        initially_flagged: flagged,
        believed_corrected: corrected,
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        believed_corrected_pct: (flagged > 0).then(|| 100.0 * corrected as f64 / flagged as f64),
        rouge: (!scored.is_empty()).then(|| RougeMeans {
            rouge1_f1: mean(|r| r.rouge1.f1),
            rouge2_f1: mean(|r| r.rouge2.f1),
            rouge_l_f1: mean(|r| r.rouge_l.f1),
        }),
    }
}

impl RunReport {
    /// Checks that every summary and verdict agrees with the records it
    /// was derived from. Returns the first disagreement.
    pub fn verify(&self) -> Result<(), String> {
        if let Some(d) = &self.detection {
            if let Some(r) = d.records.iter().find(|r| !r.report.is_consistent()) {
                return Err(format!("detection record {} contradicts its scores", r.report.example_id));
            }
            if summarize_detection(&d.records, &d.failures) != d.summary {
                return Err("detection summary differs from its records".into());
            }
        }
        if let Some(c) = &self.correction {
            for r in &c.records {
                if r.initial.verdict != Label::Inconsistent {
                    return Err(format!("{} was corrected although its verdict was 0", r.example_id));
                }
                let reports = std::iter::once(&r.initial).chain(r.redetection.as_ref());
                if reports.clone().any(|d| !d.is_consistent()) {
                    return Err(format!("correction record {} contradicts its scores", r.example_id));
                }
                let redetected_clean = r.redetection.as_ref().is_some_and(|d| d.verdict == Label::Consistent);
                if r.believed_corrected != redetected_clean {
                    return Err(format!("believed_corrected of {} disagrees with re-detection", r.example_id));
                }
            }
            if summarize_correction(&c.records) != c.summary {
                return Err("correction summary differs from its records".into());
            }
        }
        Ok(())
    }
}

/// The canonical file contents of `report`.
pub fn report_to_string(report: &RunReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports always serialize");
    text.push('\n');
    text
}

/// Parses report text; `origin` names the source in error messages.
pub fn report_from_str(text: &str, origin: &str) -> Result<RunReport, ReportError> {
    let report: RunReport = serde_json::from_str(text).map_err(|e| ReportError::Parse {
        path: origin.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(ReportError::Schema(report.schema_version));
    }
    Ok(report)
}

/// Writes `report` atomically (temp file in the same directory, then rename).
pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let io = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(report_to_string(report).as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport, ReportError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    report_from_str(&text, &path.display().to_string())
}
