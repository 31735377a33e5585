//! HTTP JSON provider.
//!
//! Request body:
//! `{"model", "kind", "prompt", "image": {"mime", "data_base64"} | null,
//!   "temperature", "top_p"?, "top_k"?, "max_output_tokens"?,
//!   "response_format": {"type": "json_object", "keys": [...]} | {"type": "text"}}`.
//! The response must be a JSON object with a string `text` field holding the
//! model output.

use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{CompletionRequest, GatewayConfig, GatewayError, Provider, ResponseFormat};

#[derive(Clone, Debug)]
pub struct RemoteProvider {
    endpoint: String,
    token: Option<String>,
}

impl RemoteProvider {
    pub fn new(endpoint: String, token: Option<String>) -> Self {
        Self { endpoint, token }
    }

    pub fn body(request: &CompletionRequest, config: &GatewayConfig) -> Value {
        let image = request.image.as_ref().map(|img| {
            json!({
                "mime": img.mime,
                "data_base64": base64::engine::general_purpose::STANDARD.encode(&img.bytes),
            })
        });
        let response_format = match &request.format {
            ResponseFormat::Text => json!({ "type": "text" }),
            ResponseFormat::Json(keys) => json!({ "type": "json_object", "keys": keys }),
        };
        let mut body = json!({
            "model": config.model_name,
            "kind": request.kind,
            "prompt": request.prompt,
            "image": image,
            "temperature": config.temperature,
            "response_format": response_format,
        });
        let s = &config.sampling;
        if let Some(v) = s.top_p {
            body["top_p"] = json!(v);
        }
        if let Some(v) = s.top_k {
            body["top_k"] = json!(v);
        }
        if let Some(v) = s.max_output_tokens {
            body["max_output_tokens"] = json!(v);
        }
        body
    }
}

impl Provider for RemoteProvider {
    fn send(
        &self,
        request: &CompletionRequest,
        config: &GatewayConfig,
    ) -> Result<String, GatewayError> {
        // A fresh client per call keeps the blocking client off any async runtime's drop path.
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let mut req = client
            .post(&self.endpoint)
            .json(&Self::body(request, config));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(config.timeout_ms)
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(config.timeout_ms)
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::InvalidJson(e.to_string()))?;
        v.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::MissingKeys(vec!["text".into()]))
    }

    fn retries_enabled(&self) -> bool {
        true
    }
}
