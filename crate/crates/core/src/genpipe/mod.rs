//! Contradiction generation: prompt construction, LLM call and parsing, plus
//! the narrative summarization and human-feedback merge prompts.

mod parse;
mod templates;

use thiserror::Error;

use crate::backend::{BackendError, DecodingParams, LlmBackend};
use crate::candidates::MisalignmentCandidate;
use crate::model::{normalize_text, AlignedPair, GenerationRecord, MisalignmentType};

pub use parse::{
    first_cue, keyed_line, parse_generation, parse_misalignment_line, render_generation,
    strip_parentheticals, MisalignmentLine, ParseError, KEY_CAPTION, KEY_CONTRADICTION,
    KEY_MISALIGNMENT, KEY_TYPE,
};
pub use templates::{build_prompt, dataset_family, PromptTemplate, TemplateError, TemplateKind, TemplateRegistry};

pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable generation after {attempts} attempt(s): {last}")]
    ParseFailed { attempts: u32, last: ParseError },
    #[error("requested {expected} misalignment, got {got}")]
    CategoryMismatch { expected: MisalignmentType, got: MisalignmentType },
}

/// Shared generation settings.
#[derive(Debug, Clone)]
pub struct Generator {
    pub templates: TemplateRegistry,
    pub params: DecodingParams,
    /// Extra attempts after a response that fails to parse.
    pub retries: u32,
}

impl Default for Generator {
    fn default() -> Self {
        Self { templates: TemplateRegistry::builtin(), params: DecodingParams::default(), retries: DEFAULT_RETRIES }
    }
}

/// Merged feedback for one benchmark instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedFeedback {
    pub feedback: String,
    pub caption_cue: String,
    pub contradiction_cue: String,
    pub raw_llm_text: String,
}

impl MergedFeedback {
    /// In the merge grammar the CAPTION cue quotes the caption's wrong claim,
    /// so it is the textual misalignment.
    pub fn text_cue(&self) -> &str {
        &self.caption_cue
    }

    /// The CONTRADICTION cue describes what the image actually shows, so it is
    /// the label to ground.
    pub fn visual_label(&self) -> &str {
        &self.contradiction_cue
    }
}

fn check(outcome: Result<GenerationRecord, ParseError>, caption: &str, expected: MisalignmentType) -> Result<GenerationRecord, GenError> {
    let rec = outcome.map_err(|last| GenError::ParseFailed { attempts: 0, last })?;
    if normalize_text(&rec.contradiction_caption) == normalize_text(caption) {
        return Err(GenError::ParseFailed { attempts: 0, last: ParseError::Unchanged });
    }
    if rec.misalignment_type != expected {
        return Err(GenError::CategoryMismatch { expected, got: rec.misalignment_type });
    }
    Ok(rec)
}

impl Generator {
    pub fn prompt_for(&self, dataset: &str, category: MisalignmentType, caption: &str) -> Result<String, GenError> {
        let t = self.templates.get(dataset, TemplateKind::Misalignment(category))?;
        Ok(build_prompt(t, caption))
    }

    /// One contradiction for `pair`, targeting the candidate's category.
    /// Unparseable, unchanged or off-category responses are retried with the
    /// same prompt up to `retries` more times.
    pub fn generate_misalignment(
        &self,
        pair: &AlignedPair,
        cand: &MisalignmentCandidate,
        llm: &dyn LlmBackend,
    ) -> Result<GenerationRecord, GenError> {
        let prompt = self.prompt_for(&pair.source_dataset, cand.category, &pair.caption)?;
        let attempts = self.retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            let raw = llm.complete_chat(&prompt, &self.params)?;
            match check(parse_generation(&raw), &pair.caption, cand.category) {
                Ok(rec) => return Ok(rec),
                Err(e) => last = Some(e),
            }
        }
        Err(match last.expect("at least one attempt") {
            GenError::ParseFailed { last, .. } => GenError::ParseFailed { attempts, last },
            other => other,
        })
    }

    /// Rewrites a spoken-style narrative into one caption.
    pub fn summarize_narrative(&self, narrative: &str, llm: &dyn LlmBackend) -> Result<String, GenError> {
        if narrative.trim().is_empty() {
            return Err(GenError::EmptyInput("narrative"));
        }
        let t = self.templates.get("", TemplateKind::Summarize)?;
        let raw = llm.complete_chat(&t.render(&[("caption", narrative.trim())]), &self.params)?;
        let caption = raw
            .rfind(KEY_CAPTION)
            .map(|i| raw[i + KEY_CAPTION.len()..].lines().next().unwrap_or("").trim())
            .filter(|c| !c.is_empty())
            .ok_or(GenError::ParseFailed { attempts: 1, last: ParseError::MissingKey("CAPTION") })?;
        Ok(caption.to_string())
    }

    /// Merges up to three rater feedbacks (absent entries allowed) into one
    /// feedback statement with cues.
    pub fn merge_human_feedbacks(
        &self,
        caption: &str,
        feedbacks: &[Option<String>],
        llm: &dyn LlmBackend,
    ) -> Result<MergedFeedback, GenError> {
        if caption.trim().is_empty() {
            return Err(GenError::EmptyInput("caption"));
        }
        if feedbacks.is_empty() || feedbacks.len() > 3 {
            return Err(GenError::EmptyInput("feedback list (1 to 3 entries)"));
        }
        if !feedbacks.iter().any(|f| present(f).is_some()) {
            return Err(GenError::EmptyInput("feedbacks"));
        }
        let t = self.templates.get("seetrue", TemplateKind::SeetrueMerge)?;
        let prompt = t.render(&[("caption", caption), ("feedbacks", &render_feedbacks(feedbacks))]);
        let attempts = self.retries + 1;
        let mut last = ParseError::MissingKey("MISALIGNMENT");
        for _ in 0..attempts {
            let raw = llm.complete_chat(&prompt, &self.params)?;
            match parse_merge(&raw) {
                Ok(line) => {
                    return Ok(MergedFeedback {
                        feedback: line.feedback,
                        caption_cue: line.caption_cue,
                        contradiction_cue: line.contradiction_cue,
                        raw_llm_text: raw,
                    })
                }
                Err(e) => last = e,
            }
        }
        Err(GenError::ParseFailed { attempts, last })
    }
}

fn present(f: &Option<String>) -> Option<&str> {
    f.as_deref().map(str::trim).filter(|s| !s.is_empty() && *s != "NaN")
}

/// `["a", NaN, "b"]`: present entries as JSON strings, absent ones as `NaN`.
pub fn render_feedbacks(feedbacks: &[Option<String>]) -> String {
    let items: Vec<String> = feedbacks
        .iter()
        .map(|f| match present(f) {
            Some(s) => serde_json::to_string(s).expect("string serializes"),
            None => "NaN".to_string(),
        })
        .collect();
    format!("[{}]", items.join(", "))
}

/// The merge response continues after `MISALIGNMENT: `, so the key may be
/// absent; echoed CAPTION/FEEDBACKS lines are skipped.
pub fn parse_merge(raw: &str) -> Result<MisalignmentLine, ParseError> {
    let line = keyed_line(raw, KEY_MISALIGNMENT).filter(|l| !l.is_empty()).or_else(|| {
        raw.lines().map(str::trim).find(|l| {
            !l.is_empty() && !l.starts_with(KEY_CAPTION) && !l.starts_with("FEEDBACKS:") && !l.starts_with(KEY_TYPE)
        })
    });
    parse_misalignment_line(line.ok_or(ParseError::MissingKey("MISALIGNMENT"))?)
}
