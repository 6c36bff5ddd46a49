//! Detection and correction experiments over a dataset.

use std::sync::Arc;

use grapheval_core::correct::{direct_correct, graph_correct};
use grapheval_core::detect::{detect_grapheval, detect_raw_nli};
use grapheval_core::extract::extract_kg;
use grapheval_core::metrics::{rouge_l, rouge_n};
use grapheval_core::{
    Corrector, DetectionReport, Example, Label, LanguageModel, Method, NliBackend, Prompts,
};
use rayon::prelude::*;
use thiserror::Error;

use super::dataset::Dataset;
use super::report::{
    summarize_correction, summarize_detection, CorrectionRecord, CorrectionRun, DetectionRecord, DetectionRun,
    Failure, RougeTriple, RunConfig, RunKind, RunReport, Stage, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("balanced accuracy was requested but {0} examples are unlabelled")]
    Unlabeled(usize),
    #[error("balanced accuracy needs both labels among the evaluated examples")]
    DegenerateLabels,
}

pub type SharedLlm = Arc<dyn LanguageModel + Send + Sync>;
pub type SharedNli = Arc<dyn NliBackend + Send + Sync>;

#[derive(Clone)]
pub struct Backends {
    pub llm: SharedLlm,
    pub nli: SharedNli,
    pub prompts: Prompts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Upper bound on examples processed concurrently.
    pub workers: usize,
    /// Fail unless balanced accuracy can be computed.
    pub require_accuracy: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            require_accuracy: false,
        }
    }
}

fn failure(ex: &Example, stage: Stage, error: impl ToString) -> Failure {
    Failure {
        example_id: ex.id.clone(),
        stage,
        error: error.to_string(),
    }
}

/// Extraction (GraphEval only) plus scoring of one example.
pub fn detect_example(ex: &Example, backends: &Backends, cfg: &RunConfig) -> Result<DetectionReport, Failure> {
    match cfg.detection.method {
        Method::RawNli => detect_raw_nli(ex, &*backends.nli, &cfg.detection).map_err(|e| failure(ex, Stage::Detect, e)),
        Method::GraphEval => {
            let extraction = extract_kg(&ex.output, &*backends.llm, &backends.prompts.kg_construction, &cfg.extraction)
                .map_err(|e| failure(ex, Stage::Extract, e))?;
            let mut report = detect_grapheval(ex, &extraction.kg, &*backends.nli, &cfg.detection)
                .map_err(|e| failure(ex, Stage::Detect, e))?;
            let mut warnings = extraction.warnings;
            warnings.append(&mut report.warnings);
            report.warnings = warnings;
            Ok(report)
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    if workers == 0 {
        return Err(HarnessError::Config("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))
}

fn validate(cfg: &RunConfig, corrector: Option<Corrector>) -> Result<(), HarnessError> {
    if cfg.extraction.max_attempts == 0 {
        return Err(HarnessError::Config("extraction max_attempts must be at least 1".into()));
    }
    if let Some(c) = cfg.correction {
        if c.max_attempts == 0 {
            return Err(HarnessError::Config("correction max_attempts must be at least 1".into()));
        }
    }
    if corrector == Some(Corrector::GraphCorrect) && cfg.detection.method != Method::GraphEval {
        return Err(HarnessError::Config(
            "graphcorrect needs flagged triples, so the detection method must be grapheval".into(),
        ));
    }
    Ok(())
}

fn detect_all(
    ds: &Dataset,
    backends: &Backends,
    cfg: &RunConfig,
    pool: &rayon::ThreadPool,
) -> (Vec<(Example, DetectionReport)>, Vec<Failure>) {
    let results: Vec<(&Example, Result<DetectionReport, Failure>)> = pool.install(|| {
        ds.examples
            .par_iter()
            .map(|ex| (ex, detect_example(ex, backends, cfg)))
            .collect()
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (ex, r) in results {
        match r {
            Ok(report) => ok.push((ex.clone(), report)),
            Err(f) => failed.push(f),
        }
    }
    ok.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    failed.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    (ok, failed)
}

fn check_accuracy(ds: &Dataset, run: &DetectionRun, opts: &RunOptions) -> Result<(), HarnessError> {
    if !opts.require_accuracy {
        return Ok(());
    }
    let unlabeled = ds.examples.iter().filter(|e| e.label.is_none()).count();
    if unlabeled > 0 {
        return Err(HarnessError::Unlabeled(unlabeled));
    }
    if run.summary.balanced_accuracy_pct.is_none() {
        return Err(HarnessError::DegenerateLabels);
    }
    Ok(())
}

fn detection_run(detected: &[(Example, DetectionReport)], failures: Vec<Failure>) -> DetectionRun {
    let records: Vec<DetectionRecord> = detected
        .iter()
        .map(|(ex, report)| DetectionRecord {
            label: ex.label,
            report: report.clone(),
        })
        .collect();
    DetectionRun {
        summary: summarize_detection(&records, &failures),
        records,
        failures,
    }
}

fn report(ds: &Dataset, kind: RunKind, cfg: &RunConfig) -> RunReport {
    RunReport {
        schema_version: SCHEMA_VERSION,
        dataset: ds.name.clone(),
        kind,
        config: cfg.clone(),
        detection: None,
        correction: None,
    }
}

/// Detects every example and scores the verdicts against the gold labels.
pub fn run_detection(
    ds: &Dataset,
    cfg: &RunConfig,
    backends: &Backends,
    opts: &RunOptions,
) -> Result<RunReport, HarnessError> {
    validate(cfg, None)?;
    if opts.require_accuracy && !ds.is_labeled() {
        return Err(HarnessError::Unlabeled(ds.examples.iter().filter(|e| e.label.is_none()).count()));
    }
    let pool = pool(opts.workers)?;
    let (detected, failures) = detect_all(ds, backends, cfg, &pool);
    let run = detection_run(&detected, failures);
    check_accuracy(ds, &run, opts)?;
    let mut out = report(ds, RunKind::Detect, cfg);
    out.detection = Some(run);
    Ok(out)
}

fn correct_example(ex: &Example, initial: &DetectionReport, backends: &Backends, cfg: &RunConfig, corrector: Corrector) -> CorrectionRecord {
    let mut record = CorrectionRecord {
        example_id: ex.id.clone(),
        initial: initial.clone(),
        correction: None,
        redetection: None,
        rouge: None,
        believed_corrected: false,
        error: None,
    };
    let correction = match corrector {
        Corrector::GraphCorrect => graph_correct(
            ex,
            initial,
            &*backends.llm,
            &backends.prompts,
            &cfg.correction.unwrap_or_default(),
        ),
        Corrector::Direct => direct_correct(ex, &*backends.llm, &backends.prompts.direct_correct),
    };
    let mut correction = match correction {
        Ok(c) => c,
        Err(e) => {
            record.error = Some(failure(ex, Stage::Correct, e));
            return record;
        }
    };
    let corrected = Example {
        output: correction.corrected_output.clone(),
        ..ex.clone()
    };
    match detect_example(&corrected, backends, cfg) {
        Ok(redetection) => {
            let fixed = redetection.verdict == Label::Consistent;
            correction.believed_corrected = Some(fixed);
            record.believed_corrected = fixed;
            record.rouge = Some(RougeTriple {
                rouge1: rouge_n(&correction.corrected_output, &ex.output, 1),
                rouge2: rouge_n(&correction.corrected_output, &ex.output, 2),
                rouge_l: rouge_l(&correction.corrected_output, &ex.output),
            });
            record.redetection = Some(redetection);
        }
        Err(mut f) => {
            f.stage = Stage::Redetect;
            record.error = Some(f);
        }
    }
    record.correction = Some(correction);
    record
}

fn correction_phase(
    detected: &[(Example, DetectionReport)],
    detection_failures: Vec<Failure>,
    backends: &Backends,
    cfg: &RunConfig,
    corrector: Corrector,
    pool: &rayon::ThreadPool,
) -> CorrectionRun {
    // Only examples the detector flagged are ever corrected.
    let flagged: Vec<&(Example, DetectionReport)> =
        detected.iter().filter(|(_, r)| r.verdict == Label::Inconsistent).collect();
    let mut records: Vec<CorrectionRecord> = pool.install(|| {
        flagged
            .par_iter()
            .map(|(ex, r)| correct_example(ex, r, backends, cfg, corrector))
            .collect()
    });
    records.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    CorrectionRun {
        summary: summarize_correction(&records),
        records,
        detection_failures,
    }
}

/// Detect, correct the flagged examples, re-detect the corrections.
pub fn run_correction(
    ds: &Dataset,
    cfg: &RunConfig,
    backends: &Backends,
    opts: &RunOptions,
) -> Result<RunReport, HarnessError> {
    let corrector = cfg
        .corrector
        .ok_or_else(|| HarnessError::Config("no corrector configured".into()))?;
    validate(cfg, Some(corrector))?;
    let pool = pool(opts.workers)?;
    let (detected, failures) = detect_all(ds, backends, cfg, &pool);
    let mut out = report(ds, RunKind::Correct, cfg);
    out.correction = Some(correction_phase(&detected, failures, backends, cfg, corrector, &pool));
    Ok(out)
}

/// Detection with metrics followed by correction, sharing the detection pass.
pub fn run_eval(ds: &Dataset, cfg: &RunConfig, backends: &Backends, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    let corrector = cfg
        .corrector
        .ok_or_else(|| HarnessError::Config("no corrector configured".into()))?;
    validate(cfg, Some(corrector))?;
    if opts.require_accuracy && !ds.is_labeled() {
        return Err(HarnessError::Unlabeled(ds.examples.iter().filter(|e| e.label.is_none()).count()));
    }
    let pool = pool(opts.workers)?;
    let (detected, failures) = detect_all(ds, backends, cfg, &pool);
    let detection = detection_run(&detected, failures.clone());
    check_accuracy(ds, &detection, opts)?;
    let mut out = report(ds, RunKind::Eval, cfg);
    out.detection = Some(detection);
    out.correction = Some(correction_phase(&detected, failures, backends, cfg, corrector, &pool));
    Ok(out)
}
