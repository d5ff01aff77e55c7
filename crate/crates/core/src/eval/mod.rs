//! Benchmark evaluation of a vision-language model's misalignment feedback.

mod boxes;
mod correlate;
mod text;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GroundingBackend, NliBackend, VlmBackend};
use crate::grounder::{ground_label, GroundError, GroundingConfig};
use crate::model::{BenchmarkInstance, ImageRef, LabeledBox, VisualAnnotation};
use crate::target::{parse_target, FIELD_SEPARATOR};

pub use boxes::{iou, match_boxes, match_labeled, match_pairs, overlap, prf, visual_f1, MatchCounts, Prf};
pub use correlate::{average_ranks, correlate, spearman, Correlation, HumanAgreement, LevelMean, Question};
pub use text::{bleu4, parse_yes_no, rouge_l, text_overlap, tokenize, TextMetric};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.75;
pub const DEFAULT_BINARY_QUERY: &str = "Does this image entail the description {text}?";
pub const DEFAULT_FEEDBACK_QUERY: &str = "Describe the misalignments between the image and the text: {text}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no score for instance {0:?}")]
    MissingInstance(String),
    #[error("{0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    #[default]
    EndToEnd,
    TwoStep,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "end-to-end" | "end_to_end" => Ok(EvalMode::EndToEnd),
            "two-step" | "two_step" => Ok(EvalMode::TwoStep),
            _ => Err(format!("unknown mode {s:?}; expected end-to-end or two-step")),
        }
    }
}

/// Query strings with a `{text}` placeholder for the caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Queries {
    pub binary: String,
    pub feedback: String,
}

impl Default for Queries {
    fn default() -> Self {
        Self { binary: DEFAULT_BINARY_QUERY.into(), feedback: DEFAULT_FEEDBACK_QUERY.into() }
    }
}

impl Queries {
    pub fn binary_for(&self, text: &str) -> String {
        self.binary.replace("{text}", text)
    }

    pub fn feedback_for(&self, text: &str) -> String {
        self.feedback.replace("{text}", text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub queries: Queries,
    pub iou_threshold: f64,
    pub label_aware: bool,
    pub grounding: GroundingConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::EndToEnd,
            queries: Queries::default(),
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            label_aware: false,
            grounding: GroundingConfig { max_boxes: 1, min_conf: 0.35 },
        }
    }
}

/// A model's feedback answer split into its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub feedback: Option<String>,
    pub text_cue: Option<String>,
    pub visual: Option<VisualAnnotation>,
    /// In two-step mode this covers the textual parts only; boxes come from
    /// grounding the predicted cue.
    pub parse_ok: bool,
    pub raw: String,
}

impl ParsedPrediction {
    fn failed(raw: &str) -> Self {
        Self { feedback: None, text_cue: None, visual: None, parse_ok: false, raw: raw.to_string() }
    }
}

/// End-to-end answers must be full target strings; two-step answers need
/// only `<feedback> | <text cue>` (a third field is ignored).
pub fn parse_prediction(raw: &str, mode: EvalMode) -> ParsedPrediction {
    let raw_t = raw.trim();
    match mode {
        EvalMode::EndToEnd => match parse_target(raw_t) {
            Ok(t) => ParsedPrediction {
                feedback: Some(t.feedback),
                text_cue: Some(t.text_cue),
                visual: Some(t.visual),
                parse_ok: true,
                raw: raw.to_string(),
            },
            Err(_) => ParsedPrediction::failed(raw),
        },
        EvalMode::TwoStep => {
            let fields: Vec<&str> = raw_t.split(FIELD_SEPARATOR).collect();
            if fields.len() < 2 || fields.len() > 3 || fields[..2].iter().any(|f| f.trim().is_empty()) {
                return ParsedPrediction::failed(raw);
            }
            ParsedPrediction {
                feedback: Some(fields[0].trim().to_string()),
                text_cue: Some(fields[1].trim().to_string()),
                visual: None,
                parse_ok: true,
                raw: raw.to_string(),
            }
        }
    }
}

/// Grounds each `" and "`-separated part of a predicted cue. Parts without a
/// detection contribute no boxes.
pub fn two_step_ground(
    cue: &str,
    image: &ImageRef,
    grounding: &dyn GroundingBackend,
    cfg: GroundingConfig,
) -> Result<Vec<LabeledBox>, GroundError> {
    if cue.trim().is_empty() {
        return Err(GroundError::EmptyLabel);
    }
    let mut out = Vec::new();
    for part in cue.split(" and ").map(str::trim).filter(|p| !p.is_empty()) {
        match ground_label(part, image, grounding, cfg) {
            Ok(v) => out.extend(v.boxes().iter().cloned()),
            Err(GroundError::NoDetection(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Fraction of answers matching the label; unparseable answers are wrong.
/// An empty list scores 0.
pub fn binary_accuracy<S: AsRef<str>>(preds: &[S], labels: &[bool]) -> Result<f64, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| parse_yes_no(p.as_ref()) == Some(**l)).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Entailment of the prediction given the ground truth as premise.
pub fn feedback_nli(gt: &str, pred: &str, nli: &dyn NliBackend) -> Result<f64, BackendError> {
    if gt.trim().is_empty() || pred.trim().is_empty() {
        return Err(BackendError::InvalidRequest("empty feedback text".into()));
    }
    nli.score_entailment(gt, pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    pub alignment_label: bool,
    pub binary_answer: String,
    pub binary_correct: bool,
    pub parse_ok: Option<bool>,
    pub feedback_nli: Option<f64>,
    pub text_nli: Option<f64>,
    pub visual_prec: Option<f64>,
    pub visual_rec: Option<f64>,
    pub visual_f1: Option<f64>,
    pub visual_counts: Option<MatchCounts>,
    pub prediction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub feedback_nli_mean: Option<f64>,
    pub n_feedback: usize,
    pub text_nli_mean: Option<f64>,
    pub n_text: usize,
    pub f1_at_075: Option<f64>,
    pub precision_at_075: Option<f64>,
    pub recall_at_075: Option<f64>,
    pub n_visual: usize,
    pub binary_accuracy: Option<f64>,
    pub n_binary: usize,
    pub parse_failure_rate: Option<f64>,
    pub n_feedback_queries: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_instance: Vec<InstanceRow>,
    pub aggregate: Aggregate,
}

fn mean(v: impl Iterator<Item = f64>) -> (Option<f64>, usize) {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    ((n > 0).then(|| s / n as f64), n)
}

/// Aggregates from per-instance rows: means over present values, micro F1
/// over summed match counts.
pub fn aggregate(rows: &[InstanceRow]) -> Aggregate {
    let (feedback_nli_mean, n_feedback) = mean(rows.iter().filter_map(|r| r.feedback_nli));
    let (text_nli_mean, n_text) = mean(rows.iter().filter_map(|r| r.text_nli));
    let counts: Vec<MatchCounts> = rows.iter().filter_map(|r| r.visual_counts).collect();
    let visual = (!counts.is_empty()).then(|| prf::<f64>(counts.iter().copied().sum()));
    let (binary_accuracy, n_binary) = mean(rows.iter().map(|r| if r.binary_correct { 1.0 } else { 0.0 }));
    let (parse_ok_rate, n_queries) = mean(rows.iter().filter_map(|r| r.parse_ok).map(|ok| if ok { 1.0 } else { 0.0 }));
    Aggregate {
        feedback_nli_mean,
        n_feedback,
        text_nli_mean,
        n_text,
        f1_at_075: visual.map(|p| p.f1),
        precision_at_075: visual.map(|p| p.precision),
        recall_at_075: visual.map(|p| p.recall),
        n_visual: counts.len(),
        binary_accuracy,
        n_binary,
        parse_failure_rate: parse_ok_rate.map(|r| 1.0 - r),
        n_feedback_queries: n_queries,
        n: rows.len(),
    }
}

impl MetricReport {
    pub fn from_rows(mut rows: Vec<InstanceRow>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let aggregate = aggregate(&rows);
        Self { per_instance: rows, aggregate }
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from(
            "id,alignment_label,binary_correct,parse_ok,feedback_nli,text_nli,visual_prec,visual_rec,visual_f1,tp,fp,fn\n",
        );
        for r in &self.per_instance {
            let c = r.visual_counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.id),
                r.alignment_label,
                r.binary_correct,
                opt(r.parse_ok),
                opt(r.feedback_nli),
                opt(r.text_nli),
                opt(r.visual_prec),
                opt(r.visual_rec),
                opt(r.visual_f1),
                opt(c.map(|c| c.tp)),
                opt(c.map(|c| c.fp)),
                opt(c.map(|c| c.fn_)),
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Backend failures for some instances; `partial` covers the rest.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} instance(s) failed, first: {}", errors.len(), errors.first().map(|e| e.1.as_str()).unwrap_or(""))]
pub struct EvalFailure {
    pub partial: MetricReport,
    pub errors: Vec<(String, String)>,
}

pub struct Backends<'a> {
    pub vlm: &'a dyn VlmBackend,
    pub nli: &'a dyn NliBackend,
    pub grounding: &'a dyn GroundingBackend,
}

/// Queries the model for every instance and scores its answers. Instances
/// are evaluated in parallel on the current rayon pool; rows are ordered by
/// instance id.
pub fn evaluate_model(
    instances: &[BenchmarkInstance],
    backends: &Backends<'_>,
    cfg: &EvalConfig,
) -> Result<MetricReport, Box<EvalFailure>> {
    let results: Vec<Result<InstanceRow, (String, String)>> = instances
        .par_iter()
        .map(|inst| evaluate_instance(inst, backends, cfg).map_err(|e| (inst.id.clone(), e)))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => errors.push(e),
        }
    }
    let report = MetricReport::from_rows(rows);
    if errors.is_empty() {
        Ok(report)
    } else {
        errors.sort();
        Err(Box::new(EvalFailure { partial: report, errors }))
    }
}

fn evaluate_instance(inst: &BenchmarkInstance, b: &Backends<'_>, cfg: &EvalConfig) -> Result<InstanceRow, String> {
    let err = |e: BackendError| e.to_string();
    let binary_answer = b.vlm.query_vlm(&inst.image, &cfg.queries.binary_for(&inst.caption)).map_err(err)?;
    let mut row = InstanceRow {
        id: inst.id.clone(),
        alignment_label: inst.alignment_label,
        binary_correct: parse_yes_no(&binary_answer) == Some(inst.alignment_label),
        binary_answer,
        parse_ok: None,
        feedback_nli: None,
        text_nli: None,
        visual_prec: None,
        visual_rec: None,
        visual_f1: None,
        visual_counts: None,
        prediction: None,
    };
    if inst.alignment_label {
        return Ok(row);
    }
    let raw = b.vlm.query_vlm(&inst.image, &cfg.queries.feedback_for(&inst.caption)).map_err(err)?;
    let mut pred = parse_prediction(&raw, cfg.mode);
    if pred.parse_ok && cfg.mode == EvalMode::TwoStep {
        let cue = pred.text_cue.clone().unwrap_or_default();
        let boxes = two_step_ground(&cue, &inst.image, b.grounding, cfg.grounding).map_err(|e| e.to_string())?;
        pred.visual = VisualAnnotation::new(boxes).ok();
    }
    row.parse_ok = Some(pred.parse_ok);
    let score = |gt: &Option<String>, p: &Option<String>| -> Result<Option<f64>, String> {
        match (gt, p) {
            (None, _) => Ok(None),
            (Some(_), None) => Ok(Some(0.0)),
            (Some(g), Some(p)) => feedback_nli(g, p, b.nli).map(Some).map_err(err),
        }
    };
    row.feedback_nli = score(&inst.gt_feedback, &pred.feedback)?;
    row.text_nli = score(&inst.gt_misalignment_in_text, &pred.text_cue)?;
    if let Some(gt) = &inst.gt_visual {
        let predicted: &[LabeledBox] = pred.visual.as_ref().map_or(&[], |v| v.boxes());
        let c = match_labeled(predicted, gt.boxes(), cfg.iou_threshold, cfg.label_aware);
        let p = prf::<f64>(c);
        row.visual_counts = Some(c);
        row.visual_prec = Some(p.precision);
        row.visual_rec = Some(p.recall);
        row.visual_f1 = Some(p.f1);
    }
    row.prediction = Some(raw);
    Ok(row)
}
