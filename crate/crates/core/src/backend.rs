//! Contracts for the external model roles.
//!
//! Every pipeline stage talks to its model through one of these traits. The
//! HTTP implementations live in the `misalign-clients` crate; deterministic
//! in-process mocks live in [`crate::mock`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounder::PixelBox;
use crate::model::ImageRef;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out")]
    Timeout,
    #[error("backend rate limited")]
    RateLimited,
    #[error("no detection above threshold")]
    NoDetection,
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Whether a retry with the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Unavailable(_) | BackendError::Timeout | BackendError::RateLimited)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendRole {
    Llm,
    Nli,
    Grounding,
    Vlm,
}

impl BackendRole {
    pub const ALL: [BackendRole; 4] =
        [BackendRole::Llm, BackendRole::Nli, BackendRole::Grounding, BackendRole::Vlm];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendRole::Llm => "llm",
            BackendRole::Nli => "nli",
            BackendRole::Grounding => "grounding",
            BackendRole::Vlm => "vlm",
        }
    }

    /// Environment variable that overrides the role's endpoint.
    pub fn env_var(self) -> &'static str {
        match self {
            BackendRole::Llm => "MQ_LLM_URL",
            BackendRole::Nli => "MQ_NLI_URL",
            BackendRole::Grounding => "MQ_GROUND_URL",
            BackendRole::Vlm => "MQ_VLM_URL",
        }
    }
}

/// LLM sampling parameters. Defaults are the generation settings used to
/// build the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub top_k: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self { temperature: 0.4, max_tokens: 700, top_p: 0.95, top_k: 30 }
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete_chat(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError>;
}

/// Returns the probability that `hypothesis` is entailed by `premise`.
pub trait NliBackend: Send + Sync {
    fn score_entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError>;
}

pub trait GroundingBackend: Send + Sync {
    fn detect_grounded_boxes(&self, image: &ImageRef, label: &str) -> Result<Vec<PixelBox>, BackendError>;
}

/// The vision-language model under evaluation.
pub trait VlmBackend: Send + Sync {
    fn query_vlm(&self, image: &ImageRef, question: &str) -> Result<String, BackendError>;
}

macro_rules! forward_impls {
    ($tr:ident, $method:ident ( $($arg:ident : $ty:ty),* ) -> $ret:ty) => {
        impl<T: $tr + ?Sized> $tr for &T {
            fn $method(&self, $($arg: $ty),*) -> $ret {
                (**self).$method($($arg),*)
            }
        }
        impl<T: $tr + ?Sized> $tr for std::sync::Arc<T> {
            fn $method(&self, $($arg: $ty),*) -> $ret {
                (**self).$method($($arg),*)
            }
        }
        impl<T: $tr + ?Sized> $tr for Box<T> {
            fn $method(&self, $($arg: $ty),*) -> $ret {
                (**self).$method($($arg),*)
            }
        }
    };
}

forward_impls!(LlmBackend, complete_chat(prompt: &str, params: &DecodingParams) -> Result<String, BackendError>);
forward_impls!(NliBackend, score_entailment(premise: &str, hypothesis: &str) -> Result<f64, BackendError>);
forward_impls!(GroundingBackend, detect_grounded_boxes(image: &ImageRef, label: &str) -> Result<Vec<PixelBox>, BackendError>);
forward_impls!(VlmBackend, query_vlm(image: &ImageRef, question: &str) -> Result<String, BackendError>);
