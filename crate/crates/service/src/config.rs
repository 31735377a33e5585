//! Service configuration: one TOML file, with the gateway token overridable
//! from the environment.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use attune_core::engine::EngineConfig;
use attune_core::gateway::GatewayConfig;
use attune_core::refiner::RefinerConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Loopback by default; screen content never leaves the machine.
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    /// Owner of sessions created without an explicit user.
    pub user: String,
    /// Base directory for relative screenshot paths in posted samples.
    pub image_root: Option<PathBuf>,
    /// Capacity of each session's live event channel.
    pub event_buffer: usize,
    pub gateway: GatewayConfig,
    pub engine: EngineConfig,
    pub refiner: RefinerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 7878)),
            data_dir: PathBuf::from("attune-data"),
            user: "default".into(),
            image_root: None,
            event_buffer: 1024,
            gateway: GatewayConfig::default(),
            engine: EngineConfig::default(),
            refiner: RefinerConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gateway
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.engine
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.bind.ip().is_loopback() {
            return Err(ConfigError::Invalid(format!(
                "bind address {} is not loopback",
                self.bind
            )));
        }
        if !valid_user(&self.user) {
            return Err(ConfigError::Invalid(format!(
                "bad user name {:?}",
                self.user
            )));
        }
        if self.event_buffer == 0 {
            return Err(ConfigError::Invalid("event_buffer must be positive".into()));
        }
        Ok(())
    }
}

/// User names become directory names, so they are kept to a safe alphabet.
pub fn valid_user(user: &str) -> bool {
    !user.is_empty()
        && user.len() <= 64
        && user
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}
