//! Uniform access to the language-model backends.
//!
//! [`Gateway`] wraps a [`Provider`] with response parsing, schema checks,
//! the retry policy and a bound on concurrent in-flight requests. Two
//! providers ship: [`remote::RemoteProvider`] (HTTP JSON) and
//! [`mock::MockProvider`] (deterministic, offline).

pub mod mock;
pub mod redact;
pub mod remote;

use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::TextRegion;

pub use mock::MockProvider;
pub use remote::RemoteProvider;

/// Environment variable consulted for the remote provider's bearer token.
pub const DEFAULT_TOKEN_ENV: &str = "ATTUNE_GATEWAY_TOKEN";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("response is missing keys: {0:?}")]
    MissingKeys(Vec<String>),
    #[error("response is malformed: {0}")]
    Malformed(String),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
    #[error("invalid gateway config: {0}")]
    Config(String),
}

impl GatewayError {
    fn is_retryable(&self) -> bool {
        match self {
            Self::Timeout(_) | Self::Transport(_) | Self::InvalidJson(_) | Self::MissingKeys(_) => {
                true
            }
            Self::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }

    /// Whether the failure came from the response contents rather than the transport.
    pub fn is_schema_failure(&self) -> bool {
        matches!(
            self,
            Self::InvalidJson(_) | Self::MissingKeys(_) | Self::Malformed(_)
        )
    }
}

/// Which prompt a request carries. Providers may use it for routing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Clarify,
    Expand,
    Detect,
    Reflect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseFormat {
    /// Free text; returned as `{"text": "..."}`.
    Text,
    /// A JSON object that must contain every listed key.
    Json(Vec<String>),
}

impl ResponseFormat {
    pub fn json(keys: &[&str]) -> Self {
        Self::Json(keys.iter().map(|k| k.to_string()).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageAttachment {
    pub mime: String,
    pub bytes: Vec<u8>,
    /// Annotated text layer of the image, when known.
    pub text_regions: Vec<TextRegion>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRequest {
    pub kind: PromptKind,
    pub prompt: String,
    pub image: Option<ImageAttachment>,
    pub format: ResponseFormat,
}

pub trait Provider: Send + Sync {
    /// Sends one request and returns the raw model output text.
    fn send(
        &self,
        request: &CompletionRequest,
        config: &GatewayConfig,
    ) -> Result<String, GatewayError>;

    /// Remote providers get transport/parse retries; offline ones answer once.
    fn retries_enabled(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[serde(alias = "remote")]
    RemoteHttp,
    #[serde(alias = "mock")]
    DeterministicMock,
}

/// Optional sampling parameters; unset fields use provider defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingProfile {
    pub top_p: Option<f64>,
    pub top_k: Option<u32>,
    pub max_output_tokens: Option<u32>,
}

impl SamplingProfile {
    /// Parameters used for benchmark evaluation runs.
    pub fn evaluation() -> Self {
        Self {
            top_p: Some(1.0),
            top_k: Some(32),
            max_output_tokens: Some(512),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub redaction_enabled: bool,
    pub max_in_flight: usize,
    pub token_env: String,
    /// Bearer token from the config file; the environment variable wins.
    pub token: Option<String>,
    pub sampling: SamplingProfile,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::DeterministicMock,
            endpoint: None,
            model_name: "mock".into(),
            temperature: 0.1,
            timeout_ms: 20_000,
            max_retries: 1,
            redaction_enabled: true,
            max_in_flight: 4,
            token_env: DEFAULT_TOKEN_ENV.into(),
            token: None,
            sampling: SamplingProfile::default(),
        }
    }
}

impl GatewayConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::Config("timeout_ms must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::Config(
                "temperature must lie in [0, 2]".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config(
                "max_in_flight must be positive".into(),
            ));
        }
        if self.provider == ProviderKind::RemoteHttp && self.endpoint.is_none() {
            return Err(GatewayError::Config(
                "remote provider needs an endpoint".into(),
            ));
        }
        Ok(())
    }

    /// Token from the environment, falling back to the config file.
    pub fn resolve_token(&self) -> Option<String> {
        std::env::var(&self.token_env)
            .ok()
            .filter(|t| !t.is_empty())
            .or_else(|| self.token.clone())
    }
}

/// Counting semaphore bounding concurrent provider calls.
struct Limiter {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap_or_else(|e| e.into_inner());
        }
        *slots -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut slots = self.0.slots.lock().unwrap_or_else(|e| e.into_inner());
        *slots += 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    config: GatewayConfig,
    provider: Arc<dyn Provider>,
    limiter: Limiter,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    /// Builds the provider named in `config`. Remote providers require a token.
    pub fn from_config(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let provider: Arc<dyn Provider> = match config.provider {
            ProviderKind::DeterministicMock => Arc::new(MockProvider::default()),
            ProviderKind::RemoteHttp => {
                let token = config
                    .resolve_token()
                    .ok_or_else(|| GatewayError::MissingCredentials(config.token_env.clone()))?;
                let endpoint = config.endpoint.clone().unwrap_or_default();
                Arc::new(RemoteProvider::new(endpoint, Some(token)))
            }
        };
        Ok(Self::with_provider(config, provider))
    }

    pub fn with_provider(config: GatewayConfig, provider: Arc<dyn Provider>) -> Self {
        let limiter = Limiter::new(config.max_in_flight.max(1));
        Self {
            config,
            provider,
            limiter,
        }
    }

    /// Deterministic offline gateway with default settings.
    pub fn mock() -> Self {
        Self::with_provider(GatewayConfig::mock(), Arc::new(MockProvider::default()))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Value, GatewayError> {
        let attempts = if self.provider.retries_enabled() {
            1 + self.config.max_retries
        } else {
            1
        };
        let mut last_err = None;
        for attempt in 0..attempts {
            let result = {
                let _permit = self.limiter.acquire();
                self.provider.send(request, &self.config)
            }
            .and_then(|raw| parse_response(&raw, &request.format));
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt + 1 < attempts => {
                    tracing::warn!(error = %e, attempt, "gateway request failed, retrying");
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| GatewayError::Transport("no attempt made".into())))
    }
}

impl Gateway {
    /// Completes `request` and converts the object with `parse`.
    ///
    /// A malformed response is re-requested once. Providers that already
    /// retry parse failures inside [`Gateway::complete`] are not retried again
    /// for JSON or key errors.
    pub fn complete_with<T>(
        &self,
        request: &CompletionRequest,
        parse: impl Fn(&Value) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        let mut last = None;
        for _ in 0..2 {
            match self.complete(request) {
                Ok(v) => match parse(&v) {
                    Ok(t) => return Ok(t),
                    Err(msg) => last = Some(GatewayError::Malformed(msg)),
                },
                Err(e) if e.is_schema_failure() && !self.provider.retries_enabled() => {
                    last = Some(e)
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| GatewayError::Malformed("no response".into())))
    }
}

/// Parses raw model output according to `format`.
pub fn parse_response(raw: &str, format: &ResponseFormat) -> Result<Value, GatewayError> {
    match format {
        ResponseFormat::Text => {
            let mut m = Map::new();
            m.insert("text".into(), Value::String(raw.trim().to_string()));
            Ok(Value::Object(m))
        }
        ResponseFormat::Json(keys) => {
            let obj = extract_json_object(raw)?;
            let missing: Vec<String> = keys
                .iter()
                .filter(|k| !obj.contains_key(k.as_str()))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(GatewayError::MissingKeys(missing));
            }
            Ok(Value::Object(obj))
        }
    }
}

/// Finds the JSON object in model output, tolerating code fences and chatter.
fn extract_json_object(raw: &str) -> Result<Map<String, Value>, GatewayError> {
    let start = raw.find('{');
    let end = raw.rfind('}');
    let slice = match (start, end) {
        (Some(s), Some(e)) if e > s => &raw[s..=e],
        _ => return Err(GatewayError::InvalidJson("no JSON object found".into())),
    };
    match serde_json::from_str::<Value>(slice) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(GatewayError::InvalidJson(
            "top-level value is not an object".into(),
        )),
        Err(e) => Err(GatewayError::InvalidJson(e.to_string())),
    }
}

/// Reads a string field, accepting numbers as well.
pub(crate) fn string_field(obj: &Value, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        calls: AtomicUsize,
        replies: Vec<Result<String, GatewayError>>,
        remote: bool,
    }

    impl Provider for Flaky {
        fn send(&self, _: &CompletionRequest, _: &GatewayConfig) -> Result<String, GatewayError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies[i.min(self.replies.len() - 1)].clone()
        }
        fn retries_enabled(&self) -> bool {
            self.remote
        }
    }

    fn req(keys: &[&str]) -> CompletionRequest {
        CompletionRequest {
            kind: PromptKind::Detect,
            prompt: "p".into(),
            image: None,
            format: ResponseFormat::json(keys),
        }
    }

    #[test]
    fn parses_fenced_json() {
        let v = parse_response(
            "```json\n{\"score\": 0.2, \"rationale\": \"x\"}\n```",
            &ResponseFormat::json(&["score", "rationale"]),
        )
        .unwrap();
        assert_eq!(v["score"], 0.2);
    }

    #[test]
    fn missing_keys_reported() {
        let err = parse_response("{\"a\":1}", &ResponseFormat::json(&["a", "b"])).unwrap_err();
        assert_eq!(err, GatewayError::MissingKeys(vec!["b".into()]));
    }

    #[test]
    fn remote_retries_once_then_succeeds() {
        let p = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            replies: vec![
                Err(GatewayError::Transport("reset".into())),
                Ok("{\"a\":1}".into()),
            ],
            remote: true,
        });
        let g = Gateway::with_provider(GatewayConfig::default(), p.clone());
        assert!(g.complete(&req(&["a"])).is_ok());
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn retry_budget_is_bounded() {
        let p = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            replies: vec![Ok("not json".into())],
            remote: true,
        });
        let g = Gateway::with_provider(GatewayConfig::default(), p.clone());
        assert!(matches!(
            g.complete(&req(&["a"])),
            Err(GatewayError::InvalidJson(_))
        ));
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn offline_provider_is_not_retried() {
        let p = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            replies: vec![Ok("{}".into())],
            remote: false,
        });
        let g = Gateway::with_provider(GatewayConfig::default(), p.clone());
        assert!(g.complete(&req(&["a"])).is_err());
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn config_validation() {
        let mut c = GatewayConfig::default();
        assert!(c.validate().is_ok());
        c.temperature = 2.5;
        assert!(c.validate().is_err());
        c.temperature = 0.1;
        c.timeout_ms = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn remote_without_token_is_a_clear_error() {
        let c = GatewayConfig {
            provider: ProviderKind::RemoteHttp,
            endpoint: Some("http://127.0.0.1:9/v1".into()),
            token_env: "ATTUNE_TEST_TOKEN_THAT_IS_NEVER_SET".into(),
            ..Default::default()
        };
        assert_eq!(
            Gateway::from_config(c).unwrap_err(),
            GatewayError::MissingCredentials("ATTUNE_TEST_TOKEN_THAT_IS_NEVER_SET".into())
        );
    }
}
