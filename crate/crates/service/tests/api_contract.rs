//! HTTP contract of the live-session API against the offline mock gateway.

mod common;

use std::io::{BufRead, BufReader};
use std::sync::Arc;

use attune_core::domain::{SessionTimeline, Validate};
use attune_core::gateway::mock::{MockProvider, DEFAULT_QUESTIONS};
use attune_core::gateway::{Gateway, GatewayConfig};
use common::*;
use serde_json::{json, Value};

fn clarified_session(api: &Api) -> String {
    let v = api.ok("/sessions", json!({"stated_intention": "Study biology"}));
    assert_eq!(v["first_question"], DEFAULT_QUESTIONS[0]);
    let id = v["session_id"].as_str().unwrap().to_string();
    let a1 = api.ok(
        &format!("/sessions/{id}/answers"),
        json!({"answer": "Cell division and genetics"}),
    );
    assert_eq!(a1["next_question"], DEFAULT_QUESTIONS[1]);
    let a2 = api.ok(
        &format!("/sessions/{id}/answers"),
        json!({"answer": "A textbook and lecture slides"}),
    );
    assert_eq!(a2["expansions_ready"], true);
    assert_eq!(a2["expanded_activities"].as_array().unwrap().len(), 10);
    id
}

#[test]
fn happy_path_with_feedback_and_rating() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    let id = clarified_session(&api);
    api.ok(&format!("/sessions/{id}/start"), json!({}));

    let mut ts = 1_000_000;
    for _ in 0..5 {
        ts += 2000;
        let r = api.ok(&format!("/sessions/{id}/samples"), on_task(ts));
        assert_eq!(r["assessment"]["classification"], "on_task");
    }
    let mut nudge = None;
    for _ in 0..3 {
        ts += 2000;
        let r = api.ok(&format!("/sessions/{id}/samples"), off_task(ts));
        assert_eq!(r["assessment"]["score"], 0.8);
        if let Some(n) = r["notifications"].as_array().unwrap().first() {
            nudge = Some(n.clone());
        }
    }
    let nudge = nudge.expect("third off-task sample confirms");
    assert_eq!(nudge["kind"], "off_task_nudge");

    let fb = api.ok(
        &format!("/sessions/{id}/feedback"),
        json!({"target_notification": nudge["id"], "verdict": "incorrect", "free_text": "club planning is part of it"}),
    );
    assert!(fb["refinement"]["policy_adjustment"]
        .as_str()
        .unwrap()
        .contains("high alignment"));
    let dup = api.post(
        &format!("/sessions/{id}/feedback"),
        json!({"target_notification": nudge["id"], "verdict": "correct"}),
    );
    assert_eq!(dup.status(), 409);

    ts += 2000;
    let r = api.ok(&format!("/sessions/{id}/samples"), off_task(ts));
    assert_eq!(r["assessment"]["score"], 0.4);
    assert_eq!(r["assessment"]["classification"], "on_task");

    let bad = api.post(
        &format!("/sessions/{id}/stop"),
        json!({"alignment_rating": 6}),
    );
    assert_eq!(bad.status(), 422);
    let stopped = api.ok(
        &format!("/sessions/{id}/stop"),
        json!({"alignment_rating": 4}),
    );
    assert_eq!(stopped["phase"], "stopped");

    let text =
        std::fs::read_to_string(dir.path().join(format!("sessions/{id}/timeline.json"))).unwrap();
    let t: SessionTimeline = serde_json::from_str(&text).unwrap();
    assert!(t.is_valid(), "{:?}", t.validate());
    assert_eq!(t.alignment_rating, Some(4));
    assert_eq!(t.samples.len(), 9);
    assert_eq!(t.feedback.len(), 1);
    assert_eq!(t.intention.refinements.len(), 1);
    assert!(svc.state().store().audit().unwrap().is_empty());
}

#[test]
fn status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    assert_eq!(
        api.post("/sessions", json!({"stated_intention": "  "}))
            .status(),
        400
    );
    assert_eq!(api.post("/sessions", json!({"nope": 1})).status(), 422);
    assert_eq!(api.get("/sessions/missing").status(), 404);
    assert_eq!(api.post("/sessions/missing/start", json!({})).status(), 404);

    let v = api.ok("/sessions", json!({"stated_intention": "study"}));
    let id = v["session_id"].as_str().unwrap();
    let sample = api.post(&format!("/sessions/{id}/samples"), on_task(2000));
    assert_eq!(sample.status(), 409);
    api.ok(&format!("/sessions/{id}/skip"), json!({}));
    assert_eq!(
        api.post(&format!("/sessions/{id}/answers"), json!({"answer": "x"}))
            .status(),
        409
    );
    api.ok(&format!("/sessions/{id}/start"), json!({}));
    assert_eq!(
        api.post(&format!("/sessions/{id}/start"), json!({}))
            .status(),
        409
    );
    api.ok(&format!("/sessions/{id}/samples"), on_task(4000));
    assert_eq!(
        api.post(&format!("/sessions/{id}/samples"), on_task(4000))
            .status(),
        422
    );
    let unknown = api.post(
        &format!("/sessions/{id}/feedback"),
        json!({"target_notification": 7, "verdict": "correct"}),
    );
    assert_eq!(unknown.status(), 404);
    let stopped = api.ok(&format!("/sessions/{id}/stop"), json!({}));
    assert!(stopped["timeline"]["alignment_rating"].is_null());
    assert_eq!(
        api.post(&format!("/sessions/{id}/stop"), json!({}))
            .status(),
        409
    );
    let h: Value = api.get("/health").json().unwrap();
    assert_eq!(h["status"], "ok");
    let list: Value = api.get("/sessions").json().unwrap();
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[test]
fn gateway_down_still_creates_a_ready_session() {
    let dir = tempfile::tempdir().unwrap();
    let provider = Arc::new(MockProvider::default());
    provider.set_down(true);
    let gw = Arc::new(Gateway::with_provider(
        GatewayConfig::mock(),
        provider.clone(),
    ));
    let svc = start(dir.path(), Some(gw));
    let api = Api::new(&svc);
    let r = api.post("/sessions", json!({"stated_intention": "study"}));
    assert_eq!(r.status(), 201);
    let v: Value = r.json().unwrap();
    assert!(v["first_question"].is_null());
    assert_eq!(v["phase"], "ready");

    // Scoring failures are reported and the session keeps running.
    let id = v["session_id"].as_str().unwrap();
    api.ok(&format!("/sessions/{id}/start"), json!({}));
    let s = api.ok(&format!("/sessions/{id}/samples"), on_task(2000));
    assert!(s["scoring_error"].is_string());
    assert_eq!(s["assessment"]["classification"], "on_task");
}

#[test]
fn skip_paths() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);

    let id = api.ok("/sessions", json!({"stated_intention": "study"}))["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let r = api.ok(&format!("/sessions/{id}/skip"), json!({}));
    assert_eq!(r["phase"], "ready");
    assert!(r["expanded_activities"].as_array().unwrap().is_empty());

    let id = api.ok("/sessions", json!({"stated_intention": "study"}))["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    api.ok(&format!("/sessions/{id}/answers"), json!({"answer": "HCI"}));
    let r = api.ok(&format!("/sessions/{id}/skip"), json!({}));
    assert_eq!(r["expanded_activities"].as_array().unwrap().len(), 10);

    // Start from clarifying skips the dialogue.
    let id = api.ok("/sessions", json!({"stated_intention": "study"}))["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let v = api.ok(&format!("/sessions/{id}/start"), json!({}));
    assert_eq!(v["phase"], "running");
}

#[test]
fn event_stream_replays_from_cursor_and_follows_live() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    let id = clarified_session(&api);
    api.ok(&format!("/sessions/{id}/start"), json!({}));

    // Live subscriber reads until the stream ends at `stopped`.
    let url = format!("{}/sessions/{id}/events", api.base);
    let reader = std::thread::spawn(move || {
        let resp = reqwest::blocking::Client::new().get(url).send().unwrap();
        let mut body = String::new();
        for line in BufReader::new(resp).lines() {
            body.push_str(&line.unwrap());
            body.push('\n');
        }
        parse_sse(&body)
    });
    std::thread::sleep(std::time::Duration::from_millis(200));
    let mut ts = 0;
    for i in 0..12 {
        ts += 2000;
        let body = if i < 4 { on_task(ts) } else { off_task(ts) };
        api.ok(&format!("/sessions/{id}/samples"), body);
    }
    api.ok(&format!("/sessions/{id}/stop"), json!({}));
    let live = reader.join().unwrap();
    let seqs: Vec<u64> = live.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    assert_eq!(live.last().unwrap()["type"], "stopped");
    let kinds: Vec<&str> = live.iter().map(|e| e["type"].as_str().unwrap()).collect();
    let nudge_at = kinds.iter().position(|k| *k == "notification").unwrap();
    assert_eq!(kinds[nudge_at - 1], "status");

    let view: Value = api.get(&format!("/sessions/{id}")).json().unwrap();
    let streamed: Vec<&Value> = live
        .iter()
        .filter(|e| e["type"] == "notification")
        .map(|e| &e["notification"])
        .collect();
    let recorded: Vec<&Value> = view["notifications"].as_array().unwrap().iter().collect();
    assert_eq!(streamed, recorded);

    // Reconnect with a cursor, by query and by header.
    let tail = parse_sse(
        &api.get(&format!("/sessions/{id}/events?cursor=5"))
            .text()
            .unwrap(),
    );
    assert_eq!(tail.first().unwrap()["seq"], 6);
    assert_eq!(tail.len(), live.len() - 5);
    let by_header = api
        .client
        .get(format!("{}/sessions/{id}/events", api.base))
        .header("Last-Event-ID", "5")
        .send()
        .unwrap()
        .text()
        .unwrap();
    assert_eq!(parse_sse(&by_header), tail);
}

#[test]
fn refinements_carry_over_to_the_next_session() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    let id = clarified_session(&api);
    api.ok(&format!("/sessions/{id}/start"), json!({}));
    for i in 1..=3 {
        api.ok(&format!("/sessions/{id}/samples"), off_task(i * 2000));
    }
    api.ok(
        &format!("/sessions/{id}/feedback"),
        json!({"target_notification": 0, "verdict": "incorrect"}),
    );
    api.ok(
        &format!("/sessions/{id}/stop"),
        json!({"alignment_rating": 3}),
    );

    let next = clarified_session(&api);
    let v = api.ok(&format!("/sessions/{next}/start"), json!({}));
    assert_eq!(v["refinements"].as_array().unwrap().len(), 1);
    let r = api.ok(&format!("/sessions/{next}/samples"), off_task(8000));
    assert_eq!(r["assessment"]["score"], 0.4);
}
