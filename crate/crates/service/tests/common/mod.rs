#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use attune_core::domain::{ActivitySample, ScreenshotRef, TextRegion};
use attune_core::gateway::Gateway;
use attune_service::{spawn, RunningService, ServiceConfig};
use base64::Engine;
use reqwest::blocking::{Client, Response};
use serde_json::{json, Value};

pub fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    }
}

pub fn start(dir: &Path, gateway: Option<Arc<Gateway>>) -> RunningService {
    spawn(config(dir), gateway).unwrap()
}

pub struct Api {
    pub base: String,
    pub client: Client,
}

impl Api {
    pub fn new(svc: &RunningService) -> Self {
        Self {
            base: svc.url(),
            client: Client::new(),
        }
    }

    pub fn post(&self, path: &str, body: Value) -> Response {
        self.client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .unwrap()
    }

    pub fn get(&self, path: &str) -> Response {
        self.client
            .get(format!("{}{path}", self.base))
            .send()
            .unwrap()
    }

    pub fn ok(&self, path: &str, body: Value) -> Value {
        let r = self.post(path, body);
        let status = r.status();
        let v: Value = r.json().unwrap();
        assert!(status.is_success(), "{path}: {status} {v}");
        v
    }
}

pub fn region(text: &str) -> TextRegion {
    TextRegion {
        x: 0,
        y: 0,
        width: 4,
        height: 2,
        text: text.into(),
        redacted: false,
    }
}

/// A blank screenshot whose text layer is `text`.
pub fn sample(ts: i64, app: &str, text: &str) -> ActivitySample {
    let png = attune_core::gateway::redact::blank_png(4, 2, [255, 255, 255]);
    ActivitySample {
        timestamp: ts,
        screenshot_ref: ScreenshotRef::Inline {
            inline: base64::engine::general_purpose::STANDARD.encode(png),
        },
        app_title: app.into(),
        url: None,
        screen_text: vec![region(text)],
    }
}

/// Scores about 0.2 for "Study biology" once clarified.
pub fn on_task(ts: i64) -> Value {
    json!(sample(
        ts,
        "Preview",
        "Biology textbook chapter: cell division"
    ))
}

/// Shares one word with the clarified intention, so it scores 0.8 until
/// corrected.
pub fn off_task(ts: i64) -> Value {
    json!(sample(
        ts,
        "Discord",
        "Discord chat about biology club party"
    ))
}

/// Parses a complete server-sent event body into JSON payloads.
pub fn parse_sse(body: &str) -> Vec<Value> {
    body.split("\n\n")
        .filter_map(|block| {
            let data: Vec<&str> = block
                .lines()
                .filter_map(|l| l.strip_prefix("data:"))
                .map(str::trim_start)
                .collect();
            (!data.is_empty()).then(|| serde_json::from_str(&data.join("\n")).unwrap())
        })
        .collect()
}
