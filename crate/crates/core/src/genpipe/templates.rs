//! Few-shot prompt templates.
//!
//! A template file has an optional `#` comment preamble followed by three
//! sections introduced by the marker lines `--CONTEXT--`, `--FEWSHOT--` and
//! `--TAIL--`. The tail may use `{caption}`, `{category}` and `{feedbacks}`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::MisalignmentType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no template for dataset {dataset:?} and kind {kind}")]
    UnknownTemplate { dataset: String, kind: TemplateKind },
    #[error("template {0}: {1}")]
    Malformed(String, &'static str),
    #[error("template {0}: {1}")]
    Io(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateKind {
    Misalignment(MisalignmentType),
    Summarize,
    SeetrueMerge,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateKind::Misalignment(t) => write!(f, "{t}"),
            TemplateKind::Summarize => f.write_str("summarize"),
            TemplateKind::SeetrueMerge => f.write_str("seetrue_merge"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub family: String,
    pub kind: TemplateKind,
    pub context_block: String,
    pub fewshot_block: String,
    pub tail_format: String,
}

const CONTEXT: &str = "--CONTEXT--\n";
const FEWSHOT: &str = "--FEWSHOT--\n";
const TAIL: &str = "--TAIL--\n";

impl PromptTemplate {
    pub fn parse(name: &str, family: &str, kind: TemplateKind, text: &str) -> Result<Self, TemplateError> {
        let text = text.replace("\r\n", "\n");
        let find = |marker: &str| -> Result<usize, TemplateError> {
            text.match_indices(marker)
                .find(|(i, _)| *i == 0 || text.as_bytes()[i - 1] == b'\n')
                .map(|(i, _)| i)
                .ok_or(TemplateError::Malformed(name.to_string(), "missing section marker"))
        };
        let (c, f, t) = (find(CONTEXT)?, find(FEWSHOT)?, find(TAIL)?);
        if !(c < f && f < t) {
            return Err(TemplateError::Malformed(name.to_string(), "sections out of order"));
        }
        if text[..c].lines().any(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            return Err(TemplateError::Malformed(name.to_string(), "text before --CONTEXT--"));
        }
        let tail = text[t + TAIL.len()..].to_string();
        if tail.matches("{caption}").count() != 1 {
            return Err(TemplateError::Malformed(name.to_string(), "tail must contain {caption} exactly once"));
        }
        if matches!(kind, TemplateKind::Misalignment(_)) && !tail.contains("Create a MISALIGNMENT of type: {category}") {
            return Err(TemplateError::Malformed(name.to_string(), "tail lacks the category request line"));
        }
        Ok(Self {
            family: family.to_string(),
            kind,
            context_block: text[c + CONTEXT.len()..f].to_string(),
            fewshot_block: text[f + FEWSHOT.len()..t].to_string(),
            tail_format: tail,
        })
    }

    /// `context + fewshot + tail` with placeholders substituted in one pass,
    /// so placeholder-like text inside values is left alone.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.context_block.len() + self.fewshot_block.len() + self.tail_format.len() + 256);
        out.push_str(&self.context_block);
        out.push_str(&self.fewshot_block);
        let mut rest = self.tail_format.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let value = after
                .find('}')
                .and_then(|close| vars.iter().find(|(k, _)| *k == &after[..close]).map(|(_, v)| (close, *v)));
            match value {
                Some((close, v)) => {
                    out.push_str(v);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// Template family serving each source dataset.
pub fn dataset_family(dataset: &str) -> Option<&'static str> {
    match dataset.to_ascii_lowercase().as_str() {
        "coco" | "flickr30k" => Some("coco"),
        "pickapic" | "imagereward" => Some("pickapic"),
        "ade20k" | "openimages" => Some("ade20k"),
        _ => None,
    }
}

const FAMILY_NARRATIVE: &str = "narrative";
const FAMILY_SEETRUE: &str = "seetrue";

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../templates/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "coco_object", "coco_attribute", "coco_action", "coco_relation",
    "pickapic_object", "pickapic_attribute", "pickapic_action", "pickapic_relation",
    "ade20k_object", "ade20k_attribute", "ade20k_action", "ade20k_relation",
    "narrative_summarize", "seetrue_merge",
);

fn key_for_name(stem: &str) -> Option<(String, TemplateKind)> {
    match stem {
        "narrative_summarize" => Some((FAMILY_NARRATIVE.into(), TemplateKind::Summarize)),
        "seetrue_merge" => Some((FAMILY_SEETRUE.into(), TemplateKind::SeetrueMerge)),
        _ => {
            let (family, cat) = stem.rsplit_once('_')?;
            let t = MisalignmentType::ALL.into_iter().find(|t| t.as_str() == cat)?;
            Some((family.to_string(), TemplateKind::Misalignment(t)))
        }
    }
}

/// All templates keyed by `(family, kind)`.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(String, TemplateKind), PromptTemplate>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut reg = Self::default();
        for (name, text) in BUILTIN {
            reg.insert_named(name, text).expect("built-in templates are well formed");
        }
        reg
    }

    /// Built-ins overlaid with every `<family>_<kind>.txt` file in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut reg = Self::builtin();
        let io = |e: std::io::Error| TemplateError::Io(dir.display().to_string(), e.to_string());
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for p in paths {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = fs::read_to_string(&p).map_err(io)?;
            reg.insert_named(&stem, &text)?;
        }
        Ok(reg)
    }

    fn insert_named(&mut self, stem: &str, text: &str) -> Result<(), TemplateError> {
        let (family, kind) = key_for_name(stem)
            .ok_or_else(|| TemplateError::Malformed(stem.to_string(), "unrecognized template file name"))?;
        let t = PromptTemplate::parse(stem, &family, kind, text)?;
        self.templates.insert((family, kind), t);
        Ok(())
    }

    pub fn get(&self, dataset: &str, kind: TemplateKind) -> Result<&PromptTemplate, TemplateError> {
        let family = match kind {
            TemplateKind::Misalignment(_) => dataset_family(dataset),
            TemplateKind::Summarize => Some(FAMILY_NARRATIVE),
            TemplateKind::SeetrueMerge => Some(FAMILY_SEETRUE),
        };
        family
            .and_then(|f| self.templates.get(&(f.to_string(), kind)))
            .ok_or_else(|| TemplateError::UnknownTemplate { dataset: dataset.to_string(), kind })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Renders the misalignment prompt for one caption and category.
pub fn build_prompt(template: &PromptTemplate, caption: &str) -> String {
    let category = match template.kind {
        TemplateKind::Misalignment(t) => t.prompt_label(),
        _ => "",
    };
    template.render(&[("category", category), ("caption", caption)])
}
