//! The `grapheval` command line.
//!
//! Settings come from flags, then an optional JSON config file
//! (`--config`), then `GRAPHEVAL_*` environment variables, then defaults.
//! API keys are only ever read from the environment variables named by
//! `--llm-api-key-env` / `--nli-api-key-env`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 backend error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use grapheval_core::extract::{extract_kg, ExtractError};
use grapheval_core::parse::render_triple;
use grapheval_core::prompt::PromptError;
use grapheval_core::{
    BackendError, CorrectionConfig, CorrectionOrder, Corrector, DetectionConfig, EmptyKgPolicy, ExtractConfig,
    LanguageModel, LlmRequest, Method, NliBackend, NliRequest, NliResponse, Polarity, Prompts, Threshold,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::mock::{MOCK_LLM_MODEL, MOCK_NLI_MODEL};
use crate::backends::{
    Cache, CacheMode, CachedLlm, CachedNli, ContainmentNli, HeuristicLlm, HttpLlm, HttpNli, LlmConfig, NliConfig,
    ReqwestTransport,
};
use crate::harness::{
    dataset_stats, load_dataset, read_report, report_to_string, run_correction, run_detection, run_eval,
    write_report, BackendSummary, Backends, HarnessError, RunConfig, RunOptions, RunReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

pub const DEFAULT_CACHE_DIR: &str = ".grapheval-cache";

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

/// Every configurable setting. Unset fields fall through to the next
/// source; the same structure is accepted as a JSON config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// LLM backend: http or mock [default: http if an endpoint is set, else mock]
    #[arg(long, global = true, value_parser = parse_serde::<BackendKind>)]
    pub llm_backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    /// Environment variable holding the LLM API key
    #[arg(long, global = true)]
    pub llm_api_key_env: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub top_p: Option<f64>,
    #[arg(long, global = true)]
    pub top_k: Option<u32>,
    /// NLI backend: http or mock [default: http if an endpoint is set, else mock]
    #[arg(long, global = true, value_parser = parse_serde::<BackendKind>)]
    pub nli_backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub nli_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub nli_model: Option<String>,
    /// Environment variable holding the NLI API key
    #[arg(long, global = true)]
    pub nli_api_key_env: Option<String>,
    /// Meaning of NLI scores that omit a polarity: consistency or hallucination
    #[arg(long, global = true, value_parser = parse_serde::<Polarity>)]
    pub nli_polarity: Option<Polarity>,
    /// Per-request timeout for HTTP backends
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    /// Retries of timeouts, transport failures and 5xx answers
    #[arg(long, global = true)]
    pub max_retries: Option<u32>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// record, replay or live
    #[arg(long, global = true, value_parser = parse_serde::<CacheMode>)]
    pub cache_mode: Option<CacheMode>,
    /// Decision threshold in (0, 1)
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// grapheval or raw-nli
    #[arg(long, global = true, value_parser = parse_serde::<Method>)]
    pub method: Option<Method>,
    /// graphcorrect or direct
    #[arg(long, global = true, value_parser = parse_serde::<Corrector>)]
    pub corrector: Option<Corrector>,
    /// LLM calls allowed per extraction or triple correction
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    /// Examples processed concurrently
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Reject a whole KG answer if any element is malformed (`--strict-parse=false` to undo)
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub strict_parse: Option<bool>,
    /// consistent-with-warning or error
    #[arg(long, global = true, value_parser = parse_serde::<EmptyKgPolicy>)]
    pub empty_kg: Option<EmptyKgPolicy>,
    /// descending-probability or kg-order
    #[arg(long, global = true, value_parser = parse_serde::<CorrectionOrder>)]
    pub correction_order: Option<CorrectionOrder>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    /// Fields set in `self` win over those in `lower`.
    pub fn or(self, lower: Settings) -> Settings {
        merge_fields!(
            self, lower, llm_backend, llm_endpoint, llm_model, llm_api_key_env, temperature, top_p, top_k,
            nli_backend, nli_endpoint, nli_model, nli_api_key_env, nli_polarity, timeout_ms, max_retries,
            cache_dir, cache_mode, threshold, method, corrector, max_attempts, workers, strict_parse, empty_kg,
            correction_order
        )
    }

    /// Settings taken from `GRAPHEVAL_*` variables.
    pub fn from_env(env: &dyn Fn(&str) -> Option<String>) -> Result<Settings, String> {
        let var = |name: &str| env(name).filter(|v| !v.is_empty());
        let parsed = |name: &str| -> Result<Option<BackendKind>, String> {
            var(name).map(|v| parse_serde(&v).map_err(|e| format!("{name}: {e}"))).transpose()
        };
        Ok(Settings {
            llm_backend: parsed("GRAPHEVAL_LLM_BACKEND")?,
            llm_endpoint: var("GRAPHEVAL_LLM_ENDPOINT"),
            llm_model: var("GRAPHEVAL_LLM_MODEL"),
            nli_backend: parsed("GRAPHEVAL_NLI_BACKEND")?,
            nli_endpoint: var("GRAPHEVAL_NLI_ENDPOINT"),
            nli_model: var("GRAPHEVAL_NLI_MODEL"),
            cache_dir: var("GRAPHEVAL_CACHE_DIR").map(PathBuf::from),
            cache_mode: var("GRAPHEVAL_CACHE_MODE")
                .map(|v| parse_serde(&v).map_err(|e| format!("GRAPHEVAL_CACHE_MODE: {e}")))
                .transpose()?,
            ..Settings::default()
        })
    }

    pub fn from_file(path: &Path) -> Result<Settings, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "grapheval", version, about = "Knowledge-graph based hallucination detection and correction")]
pub struct Cli {
    /// JSON file with settings (same keys as the long flags, in snake_case)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct InputText {
    /// Text to extract from
    #[arg(long)]
    pub text: Option<String>,
    /// File holding the text to extract from
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Line-delimited JSON dataset
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the report [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the knowledge graph of a text, one triple per line
    ExtractKg(InputText),
    /// Detect hallucinations in every example and write a report
    Detect(DatasetArgs),
    /// Correct the examples the detector flags and write a report
    Correct(DatasetArgs),
    /// Print dataset statistics
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Detection with balanced accuracy, then correction, in one report
    Eval(DatasetArgs),
    /// Check that a report's summaries agree with its records
    Verify {
        #[arg(long)]
        report: PathBuf,
    },
}

/// An error with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn data(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn backend(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_BACKEND,
        message: message.into(),
    }
}

/// Stands in for the real backend in replay mode, so that a cache miss can
/// never turn into a network call.
struct Offline;

impl LanguageModel for Offline {
    fn complete(&self, _: &LlmRequest) -> Result<String, BackendError> {
        Err(BackendError::Cache("replay mode never calls the backend".into()))
    }
}

impl NliBackend for Offline {
    fn score(&self, _: &NliRequest) -> Result<NliResponse, BackendError> {
        Err(BackendError::Cache("replay mode never calls the backend".into()))
    }
}

/// Settings resolved against defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub llm_backend: BackendKind,
    pub llm: LlmConfig,
    pub nli_backend: BackendKind,
    pub nli: NliConfig,
    pub cache_dir: PathBuf,
    pub cache_mode: CacheMode,
    pub run: RunConfig,
    pub workers: usize,
}

impl Resolved {
    pub fn new(s: &Settings) -> Result<Self, Failure> {
        let kind = |k: Option<BackendKind>, endpoint: &Option<String>| {
            k.unwrap_or(if endpoint.is_some() { BackendKind::Http } else { BackendKind::Mock })
        };
        let llm_backend = kind(s.llm_backend, &s.llm_endpoint);
        let nli_backend = kind(s.nli_backend, &s.nli_endpoint);

        let mut llm = LlmConfig::default();
        if llm_backend == BackendKind::Mock {
            llm.model_id = MOCK_LLM_MODEL.into();
        }
        let mut nli = NliConfig::default();
        if nli_backend == BackendKind::Mock {
            nli.model_id = MOCK_NLI_MODEL.into();
        }
        macro_rules! set {
            ($target:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $target = v;
                }
            };
        }
        set!(llm.endpoint, s.llm_endpoint);
        set!(llm.model_id, s.llm_model);
        set!(llm.temperature, s.temperature);
        set!(llm.top_p, s.top_p);
        set!(llm.top_k, s.top_k);
        set!(llm.timeout_ms, s.timeout_ms);
        set!(llm.max_retries, s.max_retries);
        set!(nli.endpoint, s.nli_endpoint);
        set!(nli.model_id, s.nli_model);
        set!(nli.default_polarity, s.nli_polarity);
        set!(nli.timeout_ms, s.timeout_ms);
        set!(nli.max_retries, s.max_retries);
        if let Some(v) = &s.llm_api_key_env {
            llm.api_key_env = Some(v.clone());
        }
        if let Some(v) = &s.nli_api_key_env {
            nli.api_key_env = Some(v.clone());
        }
        llm.validate_sampling().map_err(usage)?;

        let threshold = match s.threshold {
            Some(t) => Threshold::new(t).map_err(|e| usage(e.to_string()))?,
            None => Threshold::default(),
        };
        let detection = DetectionConfig {
            threshold,
            method: s.method.unwrap_or(Method::GraphEval),
            empty_kg_policy: s.empty_kg.unwrap_or(EmptyKgPolicy::ConsistentWithWarning),
        };
        let mut extraction = ExtractConfig::default();
        set!(extraction.max_attempts, s.max_attempts);
        set!(extraction.strict, s.strict_parse);
        let corrector = s.corrector.unwrap_or(Corrector::GraphCorrect);
        let mut correction = CorrectionConfig::default();
        set!(correction.max_attempts, s.max_attempts);
        set!(correction.order, s.correction_order);
        if extraction.max_attempts == 0 {
            return Err(usage("max_attempts must be at least 1"));
        }
        let workers = s.workers.unwrap_or(1);
        if workers == 0 {
            return Err(usage("workers must be at least 1"));
        }

        let endpoint = |kind: BackendKind, e: &str| (kind == BackendKind::Http).then(|| e.to_string());
        let backends = BackendSummary {
            llm_backend: if llm_backend == BackendKind::Http { "http" } else { "mock" }.into(),
            llm_model: llm.model_id.clone(),
            llm_endpoint: endpoint(llm_backend, &llm.endpoint),
            temperature: llm.temperature,
            top_p: llm.top_p,
            top_k: llm.top_k,
            nli_backend: if nli_backend == BackendKind::Http { "http" } else { "mock" }.into(),
            nli_model: nli.model_id.clone(),
            nli_endpoint: endpoint(nli_backend, &nli.endpoint),
        };
        Ok(Self {
            llm_backend,
            llm,
            nli_backend,
            nli,
            cache_dir: s.cache_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR)),
            cache_mode: s.cache_mode.unwrap_or(CacheMode::Record),
            run: RunConfig {
                detection,
                extraction,
                corrector: Some(corrector),
                correction: Some(correction),
                backends,
            },
            workers,
        })
    }

    /// The effective run configuration for a command: correction settings
    /// are only echoed when the command corrects.
    fn run_config(&self, corrects: bool) -> RunConfig {
        let mut cfg = self.run.clone();
        if !corrects {
            cfg.corrector = None;
            cfg.correction = None;
        }
        cfg
    }

    /// Builds the cached backends. Replay needs an existing cache directory
    /// and never constructs a network client.
    pub fn backends(&self) -> Result<Backends, Failure> {
        let cache = match self.cache_mode {
            CacheMode::Live => None,
            CacheMode::Record => Some(Cache::open(&self.cache_dir).map_err(|e| usage(e.to_string()))?),
            CacheMode::Replay => Some(Cache::open_existing(&self.cache_dir).map_err(|e| usage(e.to_string()))?),
        };
        let replay = self.cache_mode == CacheMode::Replay;
        let llm: Box<dyn LanguageModel + Send + Sync> = match (replay, self.llm_backend) {
            (true, _) => Box::new(Offline),
            (false, BackendKind::Mock) => Box::new(HeuristicLlm),
            (false, BackendKind::Http) => {
                let transport = ReqwestTransport::new().map_err(|e| backend(e.to_string()))?;
                Box::new(HttpLlm::new(self.llm.clone(), transport).map_err(usage)?)
            }
        };
        let nli: Box<dyn NliBackend + Send + Sync> = match (replay, self.nli_backend) {
            (true, _) => Box::new(Offline),
            (false, BackendKind::Mock) => Box::new(ContainmentNli),
            (false, BackendKind::Http) => {
                let transport = ReqwestTransport::new().map_err(|e| backend(e.to_string()))?;
                Box::new(HttpNli::new(self.nli.clone(), transport).map_err(usage)?)
            }
        };
        Ok(Backends {
            llm: Arc::new(CachedLlm::new(
                llm,
                cache.clone(),
                self.cache_mode,
                self.llm.model_id.clone(),
                self.llm.sampling_params(),
            )),
            nli: Arc::new(CachedNli::new(nli, cache, self.cache_mode, self.nli.model_id.clone())),
            prompts: Prompts::default(),
        })
    }
}

fn harness_failure(e: HarnessError) -> Failure {
    match e {
        HarnessError::Config(_) => usage(e.to_string()),
        HarnessError::Unlabeled(_) | HarnessError::DegenerateLabels => data(e.to_string()),
    }
}

fn emit_report(report: &RunReport, out_path: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match out_path {
        Some(path) => write_report(report, path).map_err(|e| data(e.to_string())),
        None => out
            .write_all(report_to_string(report).as_bytes())
            .map_err(|e| data(e.to_string())),
    }
}

fn summarize(report: &RunReport, err: &mut dyn Write) -> i32 {
    let mut code = EXIT_OK;
    if let Some(d) = &report.detection {
        let s = &d.summary;
        let _ = writeln!(err, "detection: {} evaluated, {} flagged, {} failed", s.evaluated, s.flagged, s.failed);
        if let Some(b) = s.balanced_accuracy_pct {
            let _ = writeln!(err, "balanced accuracy: {b:.1}%");
        }
        for f in &d.failures {
            let _ = writeln!(err, "failed: {} ({:?}): {}", f.example_id, f.stage, f.error);
        }
        if s.evaluated == 0 && s.failed > 0 {
            code = EXIT_BACKEND;
        }
    }
    if let Some(c) = &report.correction {
        let s = &c.summary;
        if report.detection.is_none() {
            for f in &c.detection_failures {
                let _ = writeln!(err, "failed: {} ({:?}): {}", f.example_id, f.stage, f.error);
            }
        }
        match s.believed_corrected_pct {
            Some(p) => {
                let _ = writeln!(
                    err,
                    "believed corrected: {p:.1}% ({}/{}), {} failed",
                    s.believed_corrected, s.initially_flagged, s.failed
                );
            }
            None => {
                let _ = writeln!(err, "nothing was flagged, nothing to correct");
            }
        }
        if let Some(r) = s.rouge {
            let _ = writeln!(
                err,
                "ROUGE-1 {:.3}  ROUGE-2 {:.3}  ROUGE-L {:.3}",
                r.rouge1_f1, r.rouge2_f1, r.rouge_l_f1
            );
        }
        for r in c.records.iter().filter_map(|r| r.error.as_ref()) {
            let _ = writeln!(err, "failed: {} ({:?}): {}", r.example_id, r.stage, r.error);
        }
        let nothing_detected = c.records.is_empty() && !c.detection_failures.is_empty();
        let all_failed = !c.records.is_empty() && s.failed == c.records.len();
        if report.detection.is_none() && (nothing_detected || all_failed) {
            code = EXIT_BACKEND;
        }
    }
    code
}

fn extract_command(input: &InputText, resolved: &Resolved, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let text = match (&input.text, &input.file) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?,
        (None, None) => return Err(usage("one of --text or --file is required")),
    };
    let backends = resolved.backends()?;
    let extraction = extract_kg(&text, &*backends.llm, &backends.prompts.kg_construction, &resolved.run.extraction)
        .map_err(|e| match e {
            ExtractError::Prompt(PromptError::EmptyInput) => data("input text is empty"),
            ExtractError::InvalidConfig => usage(e.to_string()),
            other => backend(other.to_string()),
        })?;
    for w in &extraction.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    for t in extraction.kg.triples() {
        writeln!(out, "{}", render_triple(t)).map_err(|e| data(e.to_string()))?;
    }
    Ok(EXIT_OK)
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path).map_err(usage)?,
        None => Settings::default(),
    };
    let settings = cli.settings.clone().or(file).or(Settings::from_env(env).map_err(usage)?);
    let resolved = Resolved::new(&settings)?;
    let opts = |require_accuracy| RunOptions {
        workers: resolved.workers,
        require_accuracy,
    };

    match &cli.command {
        Command::ExtractKg(input) => extract_command(input, &resolved, out, err),
        Command::Stats { dataset } => {
            let ds = load_dataset(dataset).map_err(|e| data(e.to_string()))?;
            let stats = dataset_stats(&ds);
            let text = serde_json::to_string_pretty(&stats).map_err(|e| data(e.to_string()))?;
            writeln!(out, "{text}").map_err(|e| data(e.to_string()))?;
            Ok(EXIT_OK)
        }
        Command::Verify { report } => {
            let report = read_report(report).map_err(|e| data(e.to_string()))?;
            report.verify().map_err(data)?;
            let _ = writeln!(err, "report is consistent");
            Ok(EXIT_OK)
        }
        Command::Detect(args) | Command::Correct(args) | Command::Eval(args) => {
            let ds = load_dataset(&args.dataset).map_err(|e| data(e.to_string()))?;
            let backends = resolved.backends()?;
            let report = match &cli.command {
                Command::Detect(_) => run_detection(&ds, &resolved.run_config(false), &backends, &opts(false)),
                Command::Correct(_) => run_correction(&ds, &resolved.run_config(true), &backends, &opts(false)),
                _ => run_eval(&ds, &resolved.run_config(true), &backends, &opts(true)),
            }
            .map_err(harness_failure)?;
            emit_report(&report, args.out.as_deref(), out)?;
            Ok(summarize(&report, err))
        }
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the exit code. `env` supplies environment variables.
pub fn run_with<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    match execute(cli, env, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(
        std::env::args_os(),
        &|name| std::env::var(name).ok(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("grapheval").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_after_subcommand() {
        let cli = parse(&["detect", "--dataset", "d.jsonl", "--method", "raw-nli", "--threshold", "0.7"]);
        assert_eq!(cli.settings.method, Some(Method::RawNli));
        assert_eq!(cli.settings.threshold, Some(0.7));
        let cli = parse(&["--strict-parse", "stats", "--dataset", "d"]);
        assert_eq!(cli.settings.strict_parse, Some(true));
    }

    #[test]
    fn precedence() {
        let flags = Settings {
            workers: Some(4),
            ..Settings::default()
        };
        let file = Settings {
            workers: Some(2),
            threshold: Some(0.6),
            ..Settings::default()
        };
        let env = Settings::from_env(&|k| match k {
            "GRAPHEVAL_CACHE_MODE" => Some("replay".into()),
            "GRAPHEVAL_LLM_MODEL" => Some("env-model".into()),
            _ => None,
        })
        .unwrap();
        let merged = flags.or(file).or(env);
        assert_eq!(merged.workers, Some(4));
        assert_eq!(merged.threshold, Some(0.6));
        assert_eq!(merged.cache_mode, Some(CacheMode::Replay));
        assert_eq!(merged.llm_model.as_deref(), Some("env-model"));
        assert!(Settings::from_env(&|k| (k == "GRAPHEVAL_CACHE_MODE").then(|| "sometimes".into())).is_err());
    }

    #[test]
    fn defaults_resolve() {
        let r = Resolved::new(&Settings::default()).unwrap();
        assert_eq!(r.llm_backend, BackendKind::Mock);
        assert_eq!(r.llm.model_id, MOCK_LLM_MODEL);
        assert_eq!((r.llm.temperature, r.llm.top_p, r.llm.top_k), (1.0, 1.0, 250));
        assert_eq!(r.run.detection.threshold.get(), 0.5);
        assert_eq!(r.cache_mode, CacheMode::Record);

        let http = Resolved::new(&Settings {
            llm_endpoint: Some("http://localhost:1/complete".into()),
            ..Settings::default()
        })
        .unwrap();
        assert_eq!(http.llm_backend, BackendKind::Http);
        assert_eq!(http.llm.model_id, "anthropic.claude-v2");
    }

    #[test]
    fn invalid_settings() {
        for s in [
            Settings {
                threshold: Some(1.0),
                ..Settings::default()
            },
            Settings {
                top_p: Some(0.0),
                ..Settings::default()
            },
            Settings {
                workers: Some(0),
                ..Settings::default()
            },
            Settings {
                max_attempts: Some(0),
                ..Settings::default()
            },
        ] {
            assert_eq!(Resolved::new(&s).unwrap_err().code, EXIT_USAGE);
        }
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(serde_json::from_str::<Settings>(r#"{"workers": 2}"#).is_ok());
        assert!(serde_json::from_str::<Settings>(r#"{"api_key": "x"}"#).is_err());
    }
}
