//! TOML pipeline configuration.
//!
//! ```toml
//! sampling_seed = 7
//! input = "pairs.jsonl"          # optional default input for `generate`
//!
//! [backends.llm]
//! endpoint_url = "mock://mocks.json"
//! [backends.nli]
//! endpoint_url = "http://localhost:9000/"
//! timeout_ms = 20000
//! max_in_flight = 8
//! retries = 3
//!
//! [thresholds]
//! tau_c = 0.25
//! tau_f = 0.75
//!
//! [decoding]
//! temperature = 0.4
//! max_tokens = 700
//! top_p = 0.95
//! top_k = 30
//!
//! [grounding]
//! max_boxes = 1
//! min_conf = 0.35
//!
//! [queries]
//! binary = "Does this image entail the description {text}?"
//! feedback = "Describe the misalignments between the image and the text: {text}"
//!
//! [concurrency]
//! workers = 4
//!
//! [generation]
//! retries = 2
//! negatives_per_pair = 1
//! template_dir = "templates"     # optional overrides
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use misalign_clients::BackendConfig;
use misalign_core::backend::{BackendRole, DecodingParams};
use misalign_core::eval::Queries;
use misalign_core::genpipe::{Generator, TemplateRegistry, DEFAULT_RETRIES};
use misalign_core::grounder::GroundingConfig;
use misalign_core::validator::Thresholds;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub endpoint_url: String,
    #[serde(default)]
    pub auth_token: Option<String>,
    #[serde(default = "d_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "d_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "d_retries")]
    pub retries: u32,
}

fn d_timeout() -> u64 {
    30_000
}
fn d_in_flight() -> usize {
    4
}
fn d_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Concurrency {
    pub workers: usize,
}

impl Default for Concurrency {
    fn default() -> Self {
        Self { workers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub retries: u32,
    pub negatives_per_pair: u32,
    pub template_dir: Option<PathBuf>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self { retries: DEFAULT_RETRIES, negatives_per_pair: 1, template_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_threshold: f64,
    pub label_aware: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { iou_threshold: misalign_core::eval::DEFAULT_IOU_THRESHOLD, label_aware: false }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backends: BTreeMap<BackendRole, BackendSection>,
    pub thresholds: Thresholds,
    pub decoding: DecodingParams,
    pub sampling_seed: u64,
    pub grounding: GroundingConfig,
    pub queries: Queries,
    pub concurrency: Concurrency,
    pub generation: GenerationSection,
    pub eval: EvalSection,
    pub input: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backends: BTreeMap::new(),
            thresholds: Thresholds::default(),
            decoding: DecodingParams::default(),
            sampling_seed: 0,
            grounding: GroundingConfig::default(),
            queries: Queries::default(),
            concurrency: Concurrency::default(),
            generation: GenerationSection::default(),
            eval: EvalSection::default(),
            input: None,
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let t = self.thresholds;
        if !(0.0..=1.0).contains(&t.tau_c) || !(0.0..=1.0).contains(&t.tau_f) {
            bail!("thresholds must lie in [0, 1]");
        }
        if self.concurrency.workers == 0 {
            bail!("concurrency.workers must be at least 1");
        }
        if self.generation.negatives_per_pair == 0 {
            bail!("generation.negatives_per_pair must be at least 1");
        }
        if self.grounding.max_boxes == 0 {
            bail!("grounding.max_boxes must be at least 1");
        }
        if !(self.eval.iou_threshold > 0.0 && self.eval.iou_threshold <= 1.0) {
            bail!("eval.iou_threshold must lie in (0, 1]");
        }
        for role in self.backends.keys() {
            self.backend(*role)?.validate()?;
        }
        self.templates()?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn backend(&self, role: BackendRole) -> anyhow::Result<BackendConfig> {
        let s = self
            .backends
            .get(&role)
            .with_context(|| format!("no [backends.{}] section in config", role.as_str()))?;
        Ok(BackendConfig {
            role,
            endpoint_url: s.endpoint_url.clone(),
            auth_token: s.auth_token.clone(),
            timeout_ms: s.timeout_ms,
            max_in_flight: s.max_in_flight,
            retries: s.retries,
        })
    }

    /// Built-in templates, overlaid with `generation.template_dir` when set.
    pub fn templates(&self) -> anyhow::Result<TemplateRegistry> {
        match &self.generation.template_dir {
            None => Ok(TemplateRegistry::builtin()),
            Some(d) => {
                let dir = self.resolve(d);
                if !dir.is_dir() {
                    bail!("template directory {} does not exist", dir.display());
                }
                Ok(TemplateRegistry::with_dir(&dir)?)
            }
        }
    }

    pub fn generator(&self) -> anyhow::Result<Generator> {
        Ok(Generator { templates: self.templates()?, params: self.decoding, retries: self.generation.retries })
    }
}
