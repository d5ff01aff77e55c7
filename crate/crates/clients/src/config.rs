use std::env;

use misalign_core::backend::BackendRole;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{role}: {field} must be at least 1")]
    NonPositive { role: &'static str, field: &'static str },
    #[error("{role}: endpoint url is empty")]
    EmptyEndpoint { role: &'static str },
    #[error("{role}: cannot load mock fixtures: {message}")]
    Fixtures { role: &'static str, message: String },
}

/// Connection settings for one model role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub role: BackendRole,
    pub endpoint_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

impl BackendConfig {
    pub fn new(role: BackendRole, endpoint_url: impl Into<String>) -> Self {
        Self {
            role,
            endpoint_url: endpoint_url.into(),
            auth_token: None,
            timeout_ms: default_timeout(),
            max_in_flight: default_in_flight(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let role = self.role.as_str();
        if self.timeout_ms == 0 {
            return Err(ConfigError::NonPositive { role, field: "timeout_ms" });
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::NonPositive { role, field: "max_in_flight" });
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(ConfigError::EmptyEndpoint { role });
        }
        Ok(())
    }

    /// The configured endpoint, replaced by the role's environment variable when set.
    pub fn resolved_endpoint(&self) -> String {
        match env::var(self.role.env_var()) {
            Ok(url) if !url.trim().is_empty() => url,
            _ => self.endpoint_url.clone(),
        }
    }
}
