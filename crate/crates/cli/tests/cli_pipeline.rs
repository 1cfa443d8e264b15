//! End-to-end checks of the `ssf` binary against the bundled fixture
//! corpus: artifact layout, provenance stamps, stage caching, upstream
//! errors, and the exit-code contract.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixture_config() -> PathBuf {
    fixtures_dir().join("config.json")
}

fn ssf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssf"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn run_into(out_dir: &Path) -> Output {
    let config = fixture_config();
    ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "run",
    ])
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Copies the fixture config with its input paths made absolute, after
/// applying `edit` to the document.
fn rewritten_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut document: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture_config()).unwrap()).unwrap();
    for key in ["corpus", "scores", "communities", "ratings", "gold_labels"] {
        if let Some(value) = document.get(key) {
            let absolute = fixtures_dir().join(value.as_str().unwrap());
            document[key] = serde_json::json!(absolute.to_str().unwrap());
        }
    }
    edit(&mut document);
    let path = dir.join("config.json");
    fs::write(&path, document.to_string()).unwrap();
    path
}

const EXPECTED_ARTIFACTS: [&str; 23] = [
    "utterances.jsonl",
    "graphs.jsonl",
    "curated.jsonl",
    "splits.jsonl",
    "stratified.jsonl",
    "curation_report.json",
    "context_summaries.jsonl",
    "community_summaries.jsonl",
    "summary_cache.jsonl",
    "inferences.jsonl",
    "generation_report.json",
    "labels.jsonl",
    "classification_report.json",
    "distributions.json",
    "entropy.csv",
    "profiles.json",
    "similarity.csv",
    "npmi__overall_goal__narrative_intent.csv",
    "ratings_kept.csv",
    "plausibility.csv",
    "agreement.csv",
    "validation_report.json",
    "report.json",
];

#[test]
fn full_run_produces_stamped_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let output = run_into(out.path());
    assert!(
        output.status.success(),
        "pipeline failed: {}",
        stderr_text(&output)
    );
    for name in EXPECTED_ARTIFACTS {
        let path = out.path().join(name);
        assert!(path.exists(), "missing artifact {name}");
        let text = fs::read_to_string(&path).unwrap();
        let stamped = if name.ends_with(".csv") {
            let first = text.lines().next().unwrap_or_default();
            first.starts_with("# engine=") && first.contains("config=")
        } else {
            let head = if name.ends_with(".jsonl") {
                text.lines().next().unwrap_or_default()
            } else {
                &text[..text.len().min(300)]
            };
            head.contains("\"meta\"")
                && head.contains("engine_version")
                && head.contains("config_hash")
        };
        assert!(stamped, "{name} lacks a provenance stamp");
    }
}

#[test]
fn rerun_hits_every_stage_cache() {
    let out = tempfile::tempdir().unwrap();
    let first = run_into(out.path());
    assert!(first.status.success(), "{}", stderr_text(&first));
    let before: Vec<(String, Vec<u8>)> = EXPECTED_ARTIFACTS
        .iter()
        .map(|name| (name.to_string(), fs::read(out.path().join(name)).unwrap()))
        .collect();

    let second = run_into(out.path());
    assert!(second.status.success(), "{}", stderr_text(&second));
    let log = stderr_text(&second);
    for stage in [
        "ingest",
        "curate",
        "summarize",
        "generate",
        "classify",
        "analyze",
        "validate",
        "report",
    ] {
        assert!(
            log.contains(&format!("[{stage}] cache hit")),
            "no cache-hit log line for {stage}; log:\n{log}"
        );
    }
    for (name, bytes) in before {
        assert_eq!(
            bytes,
            fs::read(out.path().join(&name)).unwrap(),
            "{name} rewritten by a cache-hit rerun"
        );
    }
}

#[test]
fn artifacts_are_byte_identical_across_output_directories() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    assert!(run_into(first.path()).status.success());
    assert!(run_into(second.path()).status.success());

    let names: BTreeSet<String> = fs::read_dir(first.path())
        .unwrap()
        .map(|entry| entry.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.len() >= EXPECTED_ARTIFACTS.len());
    for name in names {
        assert_eq!(
            fs::read(first.path().join(&name)).unwrap(),
            fs::read(second.path().join(&name)).unwrap(),
            "{name} differs between output directories"
        );
    }
}

#[test]
fn stage_commands_demand_their_upstream_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let classify = ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "classify",
    ]);
    assert_eq!(classify.status.code(), Some(3));
    let message = stderr_text(&classify);
    assert!(
        message.contains("inferences.jsonl") && message.contains("run generate first"),
        "unhelpful upstream error: {message}"
    );

    let analyze = ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "analyze",
    ]);
    assert_eq!(analyze.status.code(), Some(3));
    assert!(stderr_text(&analyze).contains("run curate first"));
}

#[test]
fn missing_seed_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = rewritten_config(dir.path(), |document| {
        document.as_object_mut().unwrap().remove("rng_seed");
    });
    let out = dir.path().join("out");
    let output = ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "run",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_text(&output).contains("rng_seed"));
}

#[test]
fn http_gateway_override_without_endpoint_settings_is_rejected() {
    let out = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let output = ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--gateway",
        "http",
        "ingest",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_text(&output).contains("gateway.http"));
}

#[test]
fn stage_flag_selects_a_single_stage() {
    let out = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let output = ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "run",
        "--stage",
        "ingest",
    ]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert!(out.path().join("utterances.jsonl").exists());
    assert!(!out.path().join("curated.jsonl").exists());

    let bad = ssf(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "run",
        "--stage",
        "polish",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr_text(&bad).contains("unknown stage"));
}

#[test]
fn seed_override_changes_the_sample_and_the_config_hash() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let config = fixture_config();
    for (dir, seed) in [(&first, "42"), (&second, "43")] {
        let output = ssf(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            seed,
            "run",
            "--stage",
            "ingest",
        ]);
        assert!(output.status.success(), "{}", stderr_text(&output));
    }
    // Same corpus, but the embedded config hash must differ with the
    // seed, so even the ingest artifact bytes diverge.
    assert_ne!(
        fs::read(first.path().join("utterances.jsonl")).unwrap(),
        fs::read(second.path().join("utterances.jsonl")).unwrap()
    );
}
