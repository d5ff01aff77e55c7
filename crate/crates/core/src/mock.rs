//! Deterministic offline backends driven by a fixture table.
//!
//! Fixture JSON:
//!
//! ```json
//! {
//!   "llm": { "<sha256 hex of prompt>": "<completion>" },
//!   "nli": [ { "premise": "...", "hypothesis": "...", "score": 0.1 } ],
//!   "grounding": [ { "image_uri": "...", "label": "...", "boxes": [ { "x1": 0, "y1": 0, "x2": 1, "y2": 1, "confidence": 0.9 } ] } ],
//!   "vlm": [ { "image_uri": "...", "question": "...", "answer": "..." } ]
//! }
//! ```
//!
//! Lookups that miss fall back as follows. LLM: a rule-based completion for
//! each prompt kind (see [`MockLlm`]). NLI: Jaccard similarity of lowercase
//! alphanumeric token sets, or `1.0` when the normalized strings are equal.
//! Grounding: `NoDetection`. VLM: `InvalidRequest`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{BackendError, DecodingParams, GroundingBackend, LlmBackend, NliBackend, VlmBackend};
use crate::candidates::{extract_candidates, LexiconTagger, MisalignmentCandidate, TaggerBackend};
use crate::genpipe::{render_generation, KEY_CAPTION};
use crate::grounder::PixelBox;
use crate::model::{normalize_text, ImageRef, MisalignmentType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliEntry {
    pub premise: String,
    pub hypothesis: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingEntry {
    pub image_uri: String,
    pub label: String,
    pub boxes: Vec<PixelBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmEntry {
    pub image_uri: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockFixtures {
    pub llm: std::collections::BTreeMap<String, String>,
    pub nli: Vec<NliEntry>,
    pub grounding: Vec<GroundingEntry>,
    pub vlm: Vec<VlmEntry>,
}

impl MockFixtures {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn insert_llm(&mut self, prompt: &str, completion: impl Into<String>) {
        self.llm.insert(prompt_key(prompt), completion.into());
    }
}

/// Fixture key of an LLM prompt.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Default)]
pub struct MockLlm {
    table: HashMap<String, String>,
    tagger: Arc<LexiconTagger>,
}

impl MockLlm {
    pub fn new(fx: &MockFixtures) -> Self {
        Self { table: fx.llm.clone().into_iter().collect(), tagger: Arc::new(LexiconTagger::default()) }
    }

    /// The completion produced when no fixture matches.
    pub fn fallback(&self, prompt: &str) -> String {
        let lines: Vec<&str> = prompt.lines().filter(|l| !l.trim().is_empty()).collect();
        let last = lines.last().map_or("", |l| l.trim());
        if last == "MISALIGNMENT:" {
            return fallback_merge(&lines);
        }
        if last == KEY_CAPTION {
            return fallback_summary(&lines);
        }
        if let Some(caption) = last.strip_prefix(KEY_CAPTION) {
            let category = prompt
                .rfind("Create a MISALIGNMENT of type:")
                .and_then(|i| prompt[i..].lines().next())
                .and_then(|l| l.split(':').nth(1))
                .and_then(|s| s.trim().parse::<MisalignmentType>().ok());
            if let Some(category) = category {
                return self.fallback_contradiction(caption.trim(), category);
            }
        }
        String::from("I am unable to follow this request.")
    }

    fn fallback_contradiction(&self, caption: &str, category: MisalignmentType) -> String {
        let Ok(tokens) = self.tagger.tag(caption) else {
            return String::from("Empty caption.");
        };
        let cands = extract_candidates(caption, &tokens, self.tagger.lexicon());
        let Some(c) = cands.get(&category).and_then(|v| v.first()) else {
            return format!("No {} to change.", category.as_str());
        };
        let replacement = substitute(c);
        let contradiction = format!("{}{}{}", &caption[..c.span.0], replacement, &caption[c.span.1..]);
        let feedback = format!("The caption says {}, not {}", c.surface, replacement);
        render_generation(&contradiction, &feedback, &c.surface, &replacement, category)
    }
}

fn substitute(c: &MisalignmentCandidate) -> String {
    const TABLE: &[(&str, &str)] = &[
        ("cat", "dog"), ("dog", "cat"), ("man", "woman"), ("woman", "man"), ("boy", "girl"),
        ("girl", "boy"), ("table", "chair"), ("chair", "table"), ("car", "bus"), ("bus", "car"),
        ("black", "white"), ("white", "black"), ("red", "blue"), ("blue", "red"), ("green", "yellow"),
        ("yellow", "green"), ("small", "large"), ("large", "small"), ("big", "tiny"), ("old", "new"),
        ("sitting", "standing"), ("standing", "sitting"), ("walking", "running"), ("running", "walking"),
        ("holding", "dropping"), ("eating", "sniffing"), ("riding", "pushing"), ("playing", "sleeping"),
        ("on", "under"), ("under", "on"), ("above", "below"), ("below", "above"), ("over", "under"),
        ("left", "right"), ("right", "left"), ("inside", "outside"), ("outside", "inside"),
        ("near", "far from"), ("behind", "in front of"), ("in front of", "behind"), ("atop", "beneath"),
        ("beneath", "atop"), ("next to", "behind"), ("between", "beside"),
    ];
    let lower = c.surface.to_lowercase();
    if let Some((_, r)) = TABLE.iter().find(|(k, _)| *k == lower) {
        return (*r).to_string();
    }
    let generic = match c.category {
        MisalignmentType::Object => "statue",
        MisalignmentType::Attribute => "striped",
        MisalignmentType::Action => "sleeping",
        MisalignmentType::Relation => "behind",
    };
    if lower == generic { "lamp".to_string() } else { generic.to_string() }
}

fn fallback_summary(lines: &[&str]) -> String {
    let description = lines
        .iter()
        .rev()
        .find_map(|l| l.trim().strip_prefix("DESCRIPTION:"))
        .unwrap_or("")
        .trim();
    let first = description.split_inclusive('.').next().unwrap_or(description).trim();
    format!("CAPTION: {first}")
}

fn fallback_merge(lines: &[&str]) -> String {
    let caption = lines
        .iter()
        .rev()
        .find_map(|l| l.trim().strip_prefix(KEY_CAPTION))
        .unwrap_or("")
        .trim();
    let feedbacks = lines
        .iter()
        .rev()
        .find_map(|l| l.trim().strip_prefix("FEEDBACKS:"))
        .unwrap_or("")
        .trim()
        .replace("NaN", "null");
    let first = serde_json::from_str::<Vec<Option<String>>>(&feedbacks)
        .ok()
        .and_then(|v| v.into_iter().flatten().find(|s| !s.trim().is_empty()))
        .unwrap_or_else(|| "The image differs from the caption".to_string());
    let first = first.trim().trim_end_matches('.').replace(['(', ')'], "");
    format!("MISALIGNMENT: {first} (CAPTION: {caption}) (CONTRADICTION: {first})")
}

impl LlmBackend for MockLlm {
    fn complete_chat(&self, prompt: &str, _: &DecodingParams) -> Result<String, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        Ok(match self.table.get(&prompt_key(prompt)) {
            Some(s) => s.clone(),
            None => self.fallback(prompt),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockNli {
    table: HashMap<(String, String), f64>,
}

fn token_set(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `|A ∩ B| / |A ∪ B|` over lowercase alphanumeric tokens.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (x, y) = (token_set(a), token_set(b));
    let union = x.union(&y).count();
    if union == 0 {
        return 1.0;
    }
    x.intersection(&y).count() as f64 / union as f64
}

impl MockNli {
    pub fn new(fx: &MockFixtures) -> Self {
        Self {
            table: fx.nli.iter().map(|e| ((e.premise.clone(), e.hypothesis.clone()), e.score)).collect(),
        }
    }
}

impl NliBackend for MockNli {
    fn score_entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        if let Some(s) = self.table.get(&(premise.to_string(), hypothesis.to_string())) {
            return Ok(*s);
        }
        if normalize_text(premise) == normalize_text(hypothesis) {
            return Ok(1.0);
        }
        Ok(jaccard(premise, hypothesis))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockGrounding {
    table: HashMap<(String, String), Vec<PixelBox>>,
}

impl MockGrounding {
    pub fn new(fx: &MockFixtures) -> Self {
        Self {
            table: fx
                .grounding
                .iter()
                .map(|e| ((e.image_uri.clone(), e.label.clone()), e.boxes.clone()))
                .collect(),
        }
    }
}

impl GroundingBackend for MockGrounding {
    fn detect_grounded_boxes(&self, image: &ImageRef, label: &str) -> Result<Vec<PixelBox>, BackendError> {
        match self.table.get(&(image.uri.clone(), label.to_string())) {
            Some(b) if !b.is_empty() => Ok(b.clone()),
            _ => Err(BackendError::NoDetection),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockVlm {
    table: HashMap<(String, String), String>,
}

impl MockVlm {
    pub fn new(fx: &MockFixtures) -> Self {
        Self {
            table: fx
                .vlm
                .iter()
                .map(|e| ((e.image_uri.clone(), e.question.clone()), e.answer.clone()))
                .collect(),
        }
    }
}

impl VlmBackend for MockVlm {
    fn query_vlm(&self, image: &ImageRef, question: &str) -> Result<String, BackendError> {
        self.table
            .get(&(image.uri.clone(), question.to_string()))
            .cloned()
            .ok_or_else(|| BackendError::InvalidRequest(format!("no scripted answer for {}", image.uri)))
    }
}
