//! Backends for the four model roles.
//!
//! Each role is reached either over HTTP (JSON POST, see [`http`]) or, when
//! the endpoint uses the `mock://<fixture path>` scheme, through the
//! in-process fixture mocks. The endpoint of every role can be overridden
//! with its environment variable (`MQ_LLM_URL`, `MQ_NLI_URL`,
//! `MQ_GROUND_URL`, `MQ_VLM_URL`).

pub mod config;
pub mod http;
pub mod server;
pub mod transport;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use misalign_core::backend::{GroundingBackend, LlmBackend, NliBackend, VlmBackend};
use misalign_core::mock::{MockFixtures, MockGrounding, MockLlm, MockNli, MockVlm};

pub use config::{BackendConfig, ConfigError};
pub use http::{HttpClient, HttpGrounding, HttpLlm, HttpNli, HttpTagger, HttpVlm};
pub use server::{mock_router, MockServer};
pub use transport::{Response, Transport, TransportError, UreqTransport};

pub const MOCK_SCHEME: &str = "mock://";

/// Fixture path named by a `mock://` endpoint, resolved against `base`.
/// `mock://` with no path means an empty fixture table.
pub fn mock_path(endpoint: &str, base: &Path) -> Option<Option<PathBuf>> {
    let rest = endpoint.strip_prefix(MOCK_SCHEME)?;
    if rest.is_empty() {
        return Some(None);
    }
    let p = Path::new(rest);
    Some(Some(if p.is_absolute() { p.to_path_buf() } else { base.join(p) }))
}

fn fixtures_for(cfg: &BackendConfig, base: &Path) -> Result<Option<MockFixtures>, ConfigError> {
    cfg.validate()?;
    match mock_path(&cfg.resolved_endpoint(), base) {
        None => Ok(None),
        Some(None) => Ok(Some(MockFixtures::default())),
        Some(Some(path)) => MockFixtures::load(&path)
            .map(Some)
            .map_err(|message| ConfigError::Fixtures { role: cfg.role.as_str(), message }),
    }
}

pub fn build_llm(cfg: &BackendConfig, base: &Path) -> Result<Arc<dyn LlmBackend>, ConfigError> {
    Ok(match fixtures_for(cfg, base)? {
        Some(fx) => Arc::new(MockLlm::new(&fx)),
        None => Arc::new(HttpLlm::new(cfg.clone())),
    })
}

pub fn build_nli(cfg: &BackendConfig, base: &Path) -> Result<Arc<dyn NliBackend>, ConfigError> {
    Ok(match fixtures_for(cfg, base)? {
        Some(fx) => Arc::new(MockNli::new(&fx)),
        None => Arc::new(HttpNli::new(cfg.clone())),
    })
}

pub fn build_grounding(cfg: &BackendConfig, base: &Path) -> Result<Arc<dyn GroundingBackend>, ConfigError> {
    Ok(match fixtures_for(cfg, base)? {
        Some(fx) => Arc::new(MockGrounding::new(&fx)),
        None => Arc::new(HttpGrounding::new(cfg.clone())),
    })
}

pub fn build_vlm(cfg: &BackendConfig, base: &Path) -> Result<Arc<dyn VlmBackend>, ConfigError> {
    Ok(match fixtures_for(cfg, base)? {
        Some(fx) => Arc::new(MockVlm::new(&fx)),
        None => Arc::new(HttpVlm::new(cfg.clone())),
    })
}
