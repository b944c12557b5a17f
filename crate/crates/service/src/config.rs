use std::path::PathBuf;

use memreward::{EncoderSpec, EngineConfig, MemoryConfig, RewardConfig};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// `host:port` to listen on.
    pub bind: String,
    pub engine: EngineConfig,
    pub encoder: EncoderSpec,
    /// Snapshot directory used by `/v1/snapshot`, `/v1/restore` and the
    /// periodic writer when a request names no path.
    pub snapshot_path: PathBuf,
    /// Write a snapshot every this many commits. `None` disables it.
    pub snapshot_interval: Option<u64>,
    /// Restore from `snapshot_path` at startup when a snapshot is there.
    pub restore_on_start: bool,
    /// Required as `Authorization: Bearer <token>` when set.
    pub auth_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let encoder = EncoderSpec::default();
        Self {
            bind: "127.0.0.1:8088".into(),
            engine: EngineConfig::new(encoder.dimension, MemoryConfig::default(), RewardConfig::default()),
            encoder,
            snapshot_path: PathBuf::from("memreward-snapshot"),
            snapshot_interval: None,
            restore_on_start: false,
            auth_token: None,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.engine.validate()?;
        self.encoder.validate()?;
        if self.encoder.dimension != self.engine.dimension {
            return Err(ServiceError::Config(format!(
                "encoder dimension {} differs from engine dimension {}",
                self.encoder.dimension, self.engine.dimension
            )));
        }
        if self.snapshot_interval == Some(0) {
            return Err(ServiceError::Config("snapshot_interval must be >= 1 when set".into()));
        }
        if self.auth_token.as_deref().is_some_and(str::is_empty) {
            return Err(ServiceError::Config("auth_token must not be empty".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
