//! Command-line behavior: exit codes, determinism, scorer selection, replay.

mod common;

use std::fs;
use std::sync::Arc;

use attune_core::domain::{SessionTimeline, Verdict};
use attune_core::gateway::Gateway;
use attune_service::app::{CreateRequest, FeedbackRequest, StopRequest};
use attune_service::{AppState, ServiceConfig};
use common::*;

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["bench", "synth", "--count", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        run(&["serve", "--config", p(&missing)]).status.code(),
        Some(2)
    );
    let bad = write_config(dir.path(), "bind = 12");
    assert_eq!(run(&["serve", "--config", p(&bad)]).status.code(), Some(2));
    let open = write_config(dir.path(), "bind = \"0.0.0.0:0\"");
    assert_eq!(
        run(&["serve", "--config", p(&open), "--check"])
            .status
            .code(),
        Some(2)
    );
    assert_ne!(
        run(&["replay", "--session", p(&missing)]).status.code(),
        Some(0)
    );

    let out = bin()
        .args(["--json", "replay", "--session", p(&missing)])
        .output()
        .unwrap();
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("missing.toml"));
}

#[test]
fn default_serve_listens_on_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "bind = \"127.0.0.1:0\"\ndata_dir = {:?}\n",
            p(&dir.path().join("data"))
        ),
    );
    let served = Served::start(&cfg);
    assert!(served.url.starts_with("http://127.0.0.1:"));
    let health: serde_json::Value = reqwest::blocking::get(format!("{}/health", served.url))
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(health["status"], "ok");
    served.kill();

    let v = run_json(&["serve", "--check"]);
    assert_eq!(v["bind"], "127.0.0.1:7878");
}

#[test]
fn environment_token_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let reply = r#"{"rationale": "r", "score": 0.0, "message": "m"}"#;
    let provider = FakeProvider::start(reply);
    let cfg = write_config(
        dir.path(),
        &format!(
            "[gateway]\nprovider = \"remote\"\nendpoint = {:?}\ntoken = \"from-file\"\nmax_retries = 0\n",
            provider.url
        ),
    );
    let check = |env: Option<&str>| {
        let mut c = bin();
        if let Some(t) = env {
            c.env("ATTUNE_GATEWAY_TOKEN", t);
        }
        let out = c
            .args(["--json", "serve", "--config", p(&cfg), "--check"])
            .output()
            .unwrap();
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["token_source"].clone()
    };
    assert_eq!(check(None), "file");
    assert_eq!(check(Some("from-env")), "env");
    assert_eq!(check(Some("")), "file");

    // The token that actually goes on the wire.
    let fx = fixtures(dir.path(), "base");
    let sessions = dir.path().join("one");
    run_json(&[
        "bench",
        "synth",
        "--focused",
        p(&fx.join("focused")),
        "--count",
        "1",
        "--seed",
        "3",
        "--out",
        p(&sessions),
    ]);
    let eval = |env: Option<&str>| {
        let mut c = bin();
        if let Some(t) = env {
            c.env("ATTUNE_GATEWAY_TOKEN", t);
        }
        let out = c
            .args([
                "--json",
                "bench",
                "eval",
                "--sessions",
                p(&sessions),
                "--scorer",
                "remote",
                "--config",
                p(&cfg),
            ])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let seen = std::mem::take(&mut *provider.auth.lock().unwrap());
        assert!(!seen.is_empty());
        seen
    };
    assert!(eval(None).iter().all(|a| a == "Bearer from-file"));
    assert!(eval(Some("from-env"))
        .iter()
        .all(|a| a == "Bearer from-env"));
}

#[test]
fn remote_scorer_without_credentials_fails_clearly() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path(), "base");
    let cfg = write_config(
        dir.path(),
        "[gateway]\nprovider = \"remote\"\nendpoint = \"http://127.0.0.1:9/v1\"\n",
    );
    let out = run(&[
        "bench",
        "eval",
        "--sessions",
        p(&fx.join("mixed")),
        "--scorer",
        "remote",
        "--config",
        p(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ATTUNE_GATEWAY_TOKEN"));
}

#[test]
fn synth_is_byte_deterministic_and_validates_input() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path(), "base");
    let focused = fx.join("focused");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_json(&[
            "bench",
            "synth",
            "--focused",
            p(&focused),
            "--count",
            "4",
            "--seed",
            "7",
            "--out",
            p(out),
        ]);
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in &names {
        assert_eq!(
            fs::read(a.join(n)).unwrap(),
            fs::read(b.join(n)).unwrap(),
            "{n:?}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["sessions"].as_array().unwrap().len(), 4);
    assert!(manifest["sessions"][0]["seed"].is_u64());

    let lonely = dir.path().join("lonely");
    fs::create_dir(&lonely).unwrap();
    fs::copy(
        focused.join("focused-00.json"),
        lonely.join("focused-00.json"),
    )
    .unwrap();
    let out = run(&[
        "bench",
        "synth",
        "--focused",
        p(&lonely),
        "--count",
        "4",
        "--seed",
        "7",
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let big = run_json(&[
        "bench",
        "synth",
        "--focused",
        p(&focused),
        "--count",
        "350",
        "--seed",
        "1",
        "--out",
        p(&dir.path().join("big")),
    ]);
    assert_eq!(big["sessions"], 350);
}

#[test]
fn eval_reports_oracle_and_golden_rows() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path(), "base");
    let mixed = fx.join("mixed");
    let oracle = run_json(&[
        "bench",
        "eval",
        "--sessions",
        p(&mixed),
        "--ablate",
        "--scorer",
        "oracle",
    ]);
    let rows = oracle["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        for k in ["accuracy", "precision", "recall", "f1", "balanced_accuracy"] {
            assert_eq!(r["metrics"][k], 1.0, "{k}");
        }
    }
    let single = run_json(&[
        "bench",
        "eval",
        "--sessions",
        p(&mixed),
        "--scorer",
        "oracle",
        "--feedback",
    ]);
    assert_eq!(single["rows"].as_array().unwrap().len(), 1);
    assert_eq!(single["rows"][0]["use_feedback"], true);

    let out = dir.path().join("report");
    run_json(&[
        "bench",
        "eval",
        "--sessions",
        p(&mixed),
        "--ablate",
        "--scorer",
        "mock",
        "--out",
        p(&out),
    ]);
    let golden = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/golden/ablation_base.csv"
    );
    assert_eq!(
        fs::read_to_string(out.join("ablation.csv")).unwrap(),
        fs::read_to_string(golden).unwrap()
    );
    for f in ["report.json", "trace-c0-f0.jsonl", "trace-c1-f1.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(out.join("trace-c0-f0.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3840
    );
}

fn recorded_session(dir: &std::path::Path) -> std::path::PathBuf {
    let config = ServiceConfig {
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    };
    let state = AppState::open(config, Arc::new(Gateway::mock())).unwrap();
    let id = state
        .create(CreateRequest {
            stated_intention: "Study biology".into(),
            user: None,
        })
        .unwrap()
        .session_id;
    state.answer(&id, "Cell division and genetics").unwrap();
    state.answer(&id, "A textbook and lecture slides").unwrap();
    state.start(&id).unwrap();
    for i in 1..=12 {
        let s = if i <= 4 || i > 9 {
            on_task(i * 2000)
        } else {
            off_task(i * 2000)
        };
        state.sample(&id, s).unwrap();
    }
    state
        .feedback(
            &id,
            FeedbackRequest {
                target_notification: 0,
                verdict: Verdict::Incorrect,
                free_text: None,
                timestamp: None,
            },
        )
        .unwrap();
    for i in 13..=16 {
        state.sample(&id, off_task(i * 2000)).unwrap();
    }
    state
        .stop(
            &id,
            StopRequest {
                alignment_rating: Some(4),
            },
        )
        .unwrap();
    dir.join("sessions").join(&id)
}

#[test]
fn replay_of_a_mock_session_has_no_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let session = recorded_session(&dir.path().join("data"));
    let v = run_json(&["replay", "--session", p(&session)]);
    assert_eq!(v["divergences"].as_array().unwrap().len(), 0, "{v}");
    assert_eq!(v["samples"], 16);
    assert!(v["notifications"].as_u64().unwrap() >= 2);

    // Tampering with one recorded sample shows up as divergence.
    let path = session.join("timeline.json");
    let mut t: SessionTimeline = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    t.samples[2] = off_task(t.samples[2].timestamp);
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_vec(&t).unwrap()).unwrap();
    let v = run_json(&["replay", "--session", p(&tampered)]);
    let d = v["divergences"].as_array().unwrap();
    assert!(!d.is_empty());
    assert!(d[0].as_str().unwrap().contains("sample 2"), "{v}");
}
