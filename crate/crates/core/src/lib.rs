//! Contradiction-caption generation and misalignment evaluation.
//!
//! The generation pipeline turns an aligned image-caption pair into a
//! training record in four steps: pick a word to alter
//! ([`candidates`]), ask an LLM for a contradicting caption with feedback
//! ([`genpipe`]), keep only records that pass two entailment checks
//! ([`validator`]) and ground the image-side cue to a box ([`grounder`]).
//! [`eval`] scores a vision-language model's feedback against a benchmark.
//!
//! Model calls go through the traits in [`backend`]; [`mock`] provides
//! deterministic offline implementations.

pub mod backend;
pub mod candidates;
pub mod eval;
pub mod genpipe;
pub mod grounder;
pub mod jsonl;
pub mod mock;
pub mod model;
pub mod scalar;
pub mod target;
pub mod validator;

pub use model::{
    make_norm_box, normalize_text, AlignedPair, BenchmarkInstance, CaptionProvenance, GenerationRecord, ImageKind,
    ImageRef, LabeledBox, MisalignmentType, ModelError, NormBox, ReviewStatus, TrainingRecord, VisualAnnotation,
};
pub use scalar::Scalar;
pub use target::{parse_target, render_target, Target, TargetError};

/// Exact rational scalar for metric and threshold code.
pub type Exact = num_rational::Ratio<i64>;
/// Scalar used by the pipeline and reports.
pub type Real = f64;
