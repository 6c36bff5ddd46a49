//! Datasets, experiment runs and report files.

pub mod dataset;
pub mod report;
pub mod run;

pub use dataset::{dataset_stats, load_dataset, parse_dataset, Dataset, DatasetError, DatasetStats};
pub use report::{
    read_report, report_from_str, report_to_string, write_report, BackendSummary, CorrectionRecord, CorrectionRun,
    CorrectionSummary, DetectionRecord, DetectionRun, DetectionSummary, Failure, ReportError, RougeMeans,
    RougeTriple, RunConfig, RunKind, RunReport, Stage, SCHEMA_VERSION,
};
pub use run::{
    detect_example, run_correction, run_detection, run_eval, Backends, HarnessError, RunOptions, SharedLlm,
    SharedNli,
};
