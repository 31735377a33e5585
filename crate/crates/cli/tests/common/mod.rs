#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::{Arc, Mutex};

use attune_core::domain::{ActivitySample, ScreenshotRef, TextRegion};
use attune_core::gateway::redact::blank_png;
use base64::Engine;
use serde_json::Value;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_attune"));
    c.env_remove("ATTUNE_GATEWAY_TOKEN");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn run_json(args: &[&str]) -> Value {
    let out = bin().arg("--json").args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the fixture corpus under `dir` and returns its root.
pub fn fixtures(dir: &Path, variant: &str) -> PathBuf {
    let root = dir.join(format!("fx-{variant}"));
    run_json(&["fixtures", "--out", p(&root), "--variant", variant]);
    root
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("attune.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// A served `attune` process and the address it reported.
pub struct Served {
    pub child: Child,
    pub url: String,
}

impl Served {
    pub fn start(config: &Path) -> Self {
        let mut child = bin()
            .args(["--json", "serve", "--config", p(config)])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let v: Value =
            serde_json::from_str(&line).unwrap_or_else(|e| panic!("bad listen line {line:?}: {e}"));
        Self {
            child,
            url: v["listening"].as_str().unwrap().to_string(),
        }
    }

    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
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
    ActivitySample {
        timestamp: ts,
        screenshot_ref: ScreenshotRef::Inline {
            inline: base64::engine::general_purpose::STANDARD.encode(blank_png(
                4,
                2,
                [255, 255, 255],
            )),
        },
        app_title: app.into(),
        url: None,
        screen_text: vec![region(text)],
    }
}

pub fn on_task(ts: i64) -> ActivitySample {
    sample(ts, "Preview", "Biology textbook chapter: cell division")
}

pub fn off_task(ts: i64) -> ActivitySample {
    sample(ts, "Discord", "Discord chat about biology club party")
}

/// A one-thread HTTP endpoint that records Authorization headers and answers
/// every request with `reply` as the provider's text.
pub struct FakeProvider {
    pub url: String,
    pub auth: Arc<Mutex<Vec<String>>>,
}

impl FakeProvider {
    pub fn start(reply: &str) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
        let auth = Arc::new(Mutex::new(Vec::new()));
        let seen = auth.clone();
        let body = serde_json::json!({ "text": reply }).to_string();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if lower.starts_with("authorization:") {
                        seen.lock()
                            .unwrap()
                            .push(line["authorization:".len()..].trim().to_string());
                    }
                }
                let mut buf = vec![0; len];
                let _ = reader.read_exact(&mut buf);
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        Self { url, auth }
    }
}
