mod support;

use std::path::Path;

use grapheval::cli::{run_with, EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use grapheval::harness::{read_report, DatasetStats};
use support::*;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Outcome {
    let env: Vec<(String, String)> = env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let lookup = move |name: &str| env.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(
        std::iter::once("grapheval").chain(args.iter().copied()),
        &lookup,
        &mut out,
        &mut err,
    );
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn run(args: &[&str]) -> Outcome {
    run_env(args, &[])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_on_toy() {
    let o = run(&["stats", "--dataset", s(&toy_dataset())]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    let stats: DatasetStats = serde_json::from_str(&o.out).unwrap();
    assert_eq!(stats.count, 10);
    assert_eq!(stats.label_ratio, Some(0.5));
}

#[test]
fn usage_errors() {
    let o = run(&["detect", "--dataset", "x.jsonl", "--no-such-flag"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.err.contains("Usage"));
    assert_eq!(run(&[]).code, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(run(&["detect", "--dataset", s(&toy_dataset()), "--threshold", "1.5"]).code, EXIT_USAGE);
    assert_eq!(run(&["detect", "--dataset", s(&toy_dataset()), "--method", "magic"]).code, EXIT_USAGE);
    assert_eq!(run(&["extract-kg", "--text", "a", "--file", "b"]).code, EXIT_USAGE);

    let help = run(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.out.contains("extract-kg"));
}

#[test]
fn data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(run(&["stats", "--dataset", s(&missing)]).code, EXIT_DATA);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"context\":\"c\",\"output\":\"o\",\"label\":7}\n").unwrap();
    let o = run(&["stats", "--dataset", s(&bad)]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.err.contains("line 1"), "{}", o.err);

    let unlabeled = dir.path().join("unlabeled.jsonl");
    std::fs::write(&unlabeled, "{\"id\":\"a\",\"context\":\"Alpha is here.\",\"output\":\"Alpha is here.\"}\n").unwrap();
    let cache = dir.path().join("cache");
    let o = run(&["eval", "--dataset", s(&unlabeled), "--cache-dir", s(&cache)]);
    assert_eq!(o.code, EXIT_DATA, "{}", o.err);
    assert_eq!(run(&["extract-kg", "--text", "   ", "--cache-mode", "live"]).code, EXIT_DATA);
}

#[test]
fn replay_requires_existing_cache() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "detect",
        "--dataset",
        s(&toy_dataset()),
        "--cache-mode",
        "replay",
        "--cache-dir",
        s(&dir.path().join("nope")),
    ]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn replay_miss_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty_cache = dir.path().join("cache");
    std::fs::create_dir(&empty_cache).unwrap();
    let args = ["--cache-mode", "replay", "--cache-dir", s(&empty_cache)];
    let o = run(&[&["detect", "--dataset", s(&toy_dataset())][..], &args].concat());
    assert_eq!(o.code, EXIT_BACKEND, "{}", o.err);
    assert!(o.err.contains("replay cache has no entry"));
    let o = run(&[&["extract-kg", "--text", "Alpha is here."][..], &args].concat());
    assert_eq!(o.code, EXIT_BACKEND);
}

#[test]
fn shipped_cache_replays_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (i, workers) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.json"));
        let o = run(&[
            "detect",
            "--dataset",
            s(&toy_dataset()),
            "--method",
            "grapheval",
            "--cache-mode",
            "replay",
            "--cache-dir",
            s(&toy_cache()),
            "--workers",
            workers,
            "--out",
            s(&out),
        ]);
        assert_eq!(o.code, EXIT_OK, "{}", o.err);
        assert!(o.err.contains("balanced accuracy: 90.0%"));
        reports.push(std::fs::read(&out).unwrap());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
    read_report(dir.path().join("r0.json")).unwrap().verify().unwrap();
}

#[test]
fn report_to_stdout_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let (dataset, cache) = (toy_dataset(), toy_cache());
    let base = [
        "detect",
        "--dataset",
        s(&dataset),
        "--method",
        "raw-nli",
        "--cache-mode",
        "replay",
        "--cache-dir",
        s(&cache),
    ];
    let to_stdout = run(&base);
    assert_eq!(to_stdout.code, EXIT_OK);
    assert_eq!(run(&[&base[..], &["--out", s(&out)]].concat()).code, EXIT_OK);
    assert_eq!(to_stdout.out, std::fs::read_to_string(&out).unwrap());
}

#[test]
fn extract_kg_prints_triples() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "extract-kg",
        "--text",
        "Marie Curie was born in Warsaw. Marie Curie won the Nobel Prize.",
        "--cache-dir",
        s(&dir.path().join("c")),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert_eq!(
        o.out,
        "[\"Marie Curie\", \"was born in\", \"Warsaw\"]\n[\"Marie Curie\", \"won the\", \"Nobel Prize\"]\n"
    );
    let file = dir.path().join("in.txt");
    std::fs::write(&file, "Ada Lovelace wrote notes <input> here.").unwrap();
    let o = run(&["extract-kg", "--file", s(&file), "--cache-mode", "live"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.err.contains("input_contains_delimiter: <input>"));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"method": "raw-nli", "threshold": 0.9, "cache_mode": "replay"}"#).unwrap();
    let out = dir.path().join("r.json");
    let o = run_env(
        &[
            "detect",
            "--dataset",
            s(&toy_dataset()),
            "--config",
            s(&cfg),
            "--threshold",
            "0.6",
            "--out",
            s(&out),
        ],
        &[("GRAPHEVAL_CACHE_DIR", s(&toy_cache())), ("GRAPHEVAL_CACHE_MODE", "record")],
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    let report = read_report(&out).unwrap();
    // Flag beats file, file beats environment, environment beats default.
    assert_eq!(report.config.detection.threshold.get(), 0.6);
    assert_eq!(report.config.detection.method, grapheval_core::Method::RawNli);

    std::fs::write(&cfg, r#"{"api_key": "secret"}"#).unwrap();
    assert_eq!(run(&["stats", "--dataset", s(&toy_dataset()), "--config", s(&cfg)]).code, EXIT_USAGE);
}

#[test]
fn reports_never_hold_credentials() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run_env(
        &[
            "detect",
            "--dataset",
            s(&toy_dataset()),
            "--cache-mode",
            "replay",
            "--cache-dir",
            s(&toy_cache()),
            "--out",
            s(&out),
        ],
        &[("GRAPHEVAL_LLM_API_KEY", "sk-very-secret")],
    );
    assert_eq!(o.code, EXIT_OK);
    assert!(!std::fs::read_to_string(&out).unwrap().contains("sk-very-secret"));
}

#[test]
fn correct_and_eval_replay() {
    for (cmd, corrector, expect) in [
        ("correct", "graphcorrect", "believed corrected: 83.3% (5/6)"),
        ("correct", "direct", "believed corrected: 83.3% (5/6)"),
        ("eval", "graphcorrect", "balanced accuracy: 90.0%"),
    ] {
        let o = run(&[
            cmd,
            "--dataset",
            s(&toy_dataset()),
            "--corrector",
            corrector,
            "--cache-mode",
            "replay",
            "--cache-dir",
            s(&toy_cache()),
        ]);
        assert_eq!(o.code, EXIT_OK, "{cmd} {corrector}: {}", o.err);
        assert!(o.err.contains(expect), "{cmd} {corrector}: {}", o.err);
    }
}

#[test]
fn verify_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let cache = toy_cache();
    let base = ["--cache-mode", "replay", "--cache-dir", s(&cache)];
    assert_eq!(
        run(&[&["eval", "--dataset", s(&toy_dataset()), "--out", s(&out)][..], &base].concat()).code,
        EXIT_OK
    );
    assert_eq!(run(&["verify", "--report", s(&out)]).code, EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    std::fs::write(&out, text.replace("\"balanced_accuracy_pct\": 90.0", "\"balanced_accuracy_pct\": 95.0")).unwrap();
    assert_eq!(run(&["verify", "--report", s(&out)]).code, EXIT_DATA);
}
