//! Restart and torn-write recovery, and what ends up on disk.

mod common;

use std::fs;
use std::io::Write;
use std::path::Path;

use attune_core::domain::{ActivitySample, ScreenshotRef};
use attune_core::gateway::redact::blank_png;
use base64::Engine;
use common::*;
use serde_json::{json, Value};

/// Drives one session through clarification, a nudge and feedback, leaving it running.
fn run_session(api: &Api) -> String {
    let id = api.ok("/sessions", json!({"stated_intention": "Study biology"}))["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    api.ok(
        &format!("/sessions/{id}/answers"),
        json!({"answer": "Cell division and genetics"}),
    );
    api.ok(
        &format!("/sessions/{id}/answers"),
        json!({"answer": "A textbook and lecture slides"}),
    );
    api.ok(&format!("/sessions/{id}/start"), json!({}));
    for i in 1..=8 {
        let body = if i <= 3 {
            on_task(i * 2000)
        } else {
            off_task(i * 2000)
        };
        api.ok(&format!("/sessions/{id}/samples"), body);
    }
    api.ok(
        &format!("/sessions/{id}/feedback"),
        json!({"target_notification": 0, "verdict": "incorrect"}),
    );
    id
}

fn view(api: &Api, id: &str) -> Value {
    api.get(&format!("/sessions/{id}")).json().unwrap()
}

fn events(api: &Api, id: &str) -> Vec<Value> {
    // A running session's stream never ends, so read history through the view cursor.
    let n = view(api, id)["events"].as_u64().unwrap();
    let resp = api
        .client
        .get(format!("{}/sessions/{id}/events", api.base))
        .send()
        .unwrap();
    let mut body = String::new();
    let mut reader = std::io::BufReader::new(resp);
    let mut got = 0;
    while got < n {
        let mut line = String::new();
        if std::io::BufRead::read_line(&mut reader, &mut line).unwrap() == 0 {
            break;
        }
        if line.starts_with("data:") {
            got += 1;
        }
        body.push_str(&line);
    }
    body.push('\n');
    parse_sse(&body)
}

#[test]
fn restart_reproduces_state_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before, before_events) = {
        let svc = start(dir.path(), None);
        let api = Api::new(&svc);
        let id = run_session(&api);
        (id.clone(), view(&api, &id), events(&api, &id))
    };
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    assert_eq!(view(&api, &id), before);
    assert_eq!(events(&api, &id), before_events);

    // The restored session keeps accepting work where it left off.
    let r = api.ok(&format!("/sessions/{id}/samples"), off_task(40_000));
    assert_eq!(r["assessment"]["score"], 0.4);
    api.ok(
        &format!("/sessions/{id}/stop"),
        json!({"alignment_rating": 5}),
    );
    assert!(svc.state().store().audit().unwrap().is_empty());
}

#[test]
fn torn_tail_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let svc = start(dir.path(), None);
        let api = Api::new(&svc);
        let id = run_session(&api);
        (id.clone(), view(&api, &id))
    };
    let log = dir.path().join(format!("sessions/{id}/log.jsonl"));
    let intact = fs::read(&log).unwrap();
    fs::OpenOptions::new()
        .append(true)
        .open(&log)
        .unwrap()
        .write_all(b"{\"op\":\"sample\",\"sample\":{\"timestamp\":")
        .unwrap();

    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    assert_eq!(view(&api, &id), before);
    assert_eq!(fs::read(&log).unwrap(), intact);
    assert!(svc.state().store().audit().unwrap().is_empty());
}

#[test]
fn stop_without_timeline_is_completed_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let svc = start(dir.path(), None);
        let api = Api::new(&svc);
        let id = run_session(&api);
        api.ok(&format!("/sessions/{id}/stop"), json!({}));
        id
    };
    let timeline = dir.path().join(format!("sessions/{id}/timeline.json"));
    let written = fs::read(&timeline).unwrap();
    fs::remove_file(&timeline).unwrap();
    let _svc = start(dir.path(), None);
    assert_eq!(fs::read(&timeline).unwrap(), written);
}

fn all_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(all_bytes(&p));
        } else {
            out.push((p.display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn pii_never_reaches_disk() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(dir.path(), None);
    let api = Api::new(&svc);
    let id = api.ok("/sessions", json!({"stated_intention": "Study biology"}))["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    api.ok(&format!("/sessions/{id}/start"), json!({}));

    let original =
        base64::engine::general_purpose::STANDARD.encode(blank_png(16, 8, [200, 200, 200]));
    let mut s: ActivitySample = serde_json::from_value(on_task(2000)).unwrap();
    s.screenshot_ref = ScreenshotRef::Inline {
        inline: original.clone(),
    };
    s.screen_text
        .push(region("Reach me at jane.doe@example.org"));
    s.screen_text.push(region("Card 4111 1111 1111 1111"));
    s.app_title = "Mail - jane.doe@example.org".into();
    s.url = Some("https://mail.example.org/?to=jane.doe@example.org".into());
    let r = api.ok(&format!("/sessions/{id}/samples"), json!(s));
    assert!(r["scoring_error"].is_null(), "{r}");

    // A second sample with no image at all still has its text scrubbed.
    let mut bare: ActivitySample = serde_json::from_value(on_task(4000)).unwrap();
    bare.screenshot_ref = ScreenshotRef::Absent;
    bare.screen_text.push(region("Call 206-555-0142"));
    api.ok(&format!("/sessions/{id}/samples"), json!(bare));
    api.ok(&format!("/sessions/{id}/stop"), json!({}));

    let needles = ["jane.doe", "4111 1111", "555-0142", original.as_str()];
    for (path, bytes) in all_bytes(dir.path()) {
        let text = String::from_utf8_lossy(&bytes);
        for n in needles {
            assert!(!text.contains(n), "{path} contains {n}");
        }
    }
    assert!(svc.state().store().audit().unwrap().is_empty());
}
