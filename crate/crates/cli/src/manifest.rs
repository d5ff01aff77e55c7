//! Source manifests: a JSONL file whose first line is a header
//! `{"dataset_name", "caption_style"}` and whose remaining lines are records
//! `{"id", "image": {"uri", "width_px", "height_px", "kind"?}, "captions": [...]}`
//! or, for `localized_narrative`, `{"id", "image", "narrative": "..."}`.

use std::fs;
use std::path::Path;

use misalign_core::backend::LlmBackend;
use misalign_core::candidates::select_positive_caption;
use misalign_core::genpipe::{GenError, Generator};
use misalign_core::model::declared_image_kind;
use misalign_core::{AlignedPair, CaptionProvenance, ImageKind, ImageRef};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionStyle {
    HumanMulti,
    Predicted,
    LocalizedNarrative,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("record {id}: {source}")]
    Summarize { id: String, source: GenError },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dataset_name: String,
    caption_style: CaptionStyle,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    uri: String,
    width_px: u32,
    height_px: u32,
    #[serde(default)]
    kind: Option<ImageKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    image: RawImage,
    #[serde(default)]
    captions: Option<Vec<String>>,
    #[serde(default)]
    narrative: Option<String>,
}

/// A record checked against its manifest's caption style, before any LLM call.
#[derive(Debug)]
enum Pending {
    Ready(AlignedPair),
    Narrative { id: String, image: ImageRef, text: String },
}

pub struct Manifest {
    pub dataset_name: String,
    pub caption_style: CaptionStyle,
    items: Vec<Pending>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn schema(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Schema { line, message: message.into() }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, IngestError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| schema(1, "empty manifest"))?;
    let header: Header = serde_json::from_str(header).map_err(|e| schema(hl + 1, format!("header: {e}")))?;
    let style = header.caption_style;
    let mut items = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let n = i + 1;
        let r: Record = serde_json::from_str(line).map_err(|e| schema(n, e.to_string()))?;
        if !seen.insert(r.id.clone()) {
            return Err(schema(n, format!("duplicate id {:?}", r.id)));
        }
        let declared = declared_image_kind(&header.dataset_name);
        let kind = match (r.image.kind, declared) {
            (Some(k), Some(d)) if k != d => {
                return Err(schema(n, format!("image kind {k:?} contradicts dataset {}", header.dataset_name)))
            }
            (Some(k), _) => k,
            (None, Some(d)) => d,
            (None, None) => ImageKind::Natural,
        };
        let image = ImageRef::new(r.image.uri, r.image.width_px, r.image.height_px, kind).map_err(|e| schema(n, e.to_string()))?;
        let pair = |caption: &str, prov| {
            AlignedPair::new(&r.id, image.clone(), caption, prov, &header.dataset_name).map_err(|e| schema(n, e.to_string()))
        };
        let item = match (style, &r.captions, &r.narrative) {
            (CaptionStyle::HumanMulti, Some(caps), None) => {
                let best = select_positive_caption(caps).map_err(|e| schema(n, e.to_string()))?;
                Pending::Ready(pair(best, CaptionProvenance::HumanAnnotated)?)
            }
            (CaptionStyle::Predicted, Some(caps), None) if caps.len() == 1 => {
                Pending::Ready(pair(&caps[0], CaptionProvenance::ModelPredicted)?)
            }
            (CaptionStyle::Predicted, Some(_), None) => return Err(schema(n, "predicted records carry exactly one caption")),
            (CaptionStyle::LocalizedNarrative, None, Some(text)) if !text.trim().is_empty() => {
                Pending::Narrative { id: r.id.clone(), image, text: text.clone() }
            }
            (CaptionStyle::LocalizedNarrative, _, _) => return Err(schema(n, "localized_narrative records need a non-empty narrative and no captions")),
            _ => return Err(schema(n, "human_multi and predicted records need captions and no narrative")),
        };
        items.push(item);
    }
    Ok(Manifest { dataset_name: header.dataset_name, caption_style: style, items })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

/// Turns manifest records into positive pairs. Narratives are summarized by
/// the LLM; any failure there aborts ingestion.
pub fn ingest(m: Manifest, generator: &Generator, llm: Option<&dyn LlmBackend>) -> Result<Vec<AlignedPair>, IngestError> {
    let dataset = m.dataset_name;
    m.items
        .into_par_iter()
        .map(|item| match item {
            Pending::Ready(p) => Ok(p),
            Pending::Narrative { id, image, text } => {
                let llm = llm.ok_or_else(|| IngestError::Summarize {
                    id: id.clone(),
                    source: GenError::Backend(misalign_core::backend::BackendError::Unavailable("no LLM backend configured".into())),
                })?;
                let caption = generator
                    .summarize_narrative(&text, llm)
                    .map_err(|source| IngestError::Summarize { id: id.clone(), source })?;
                AlignedPair::new(id.clone(), image, caption, CaptionProvenance::NarrativeSummarized, &dataset)
                    .map_err(|_| IngestError::Summarize { id, source: GenError::EmptyInput("summarized caption") })
            }
        })
        .collect()
}

/// Whether a JSONL file starts with a manifest header rather than a pair.
pub fn looks_like_manifest(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("caption_style").is_some())
}
