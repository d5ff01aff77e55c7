//! The generation pipeline: sample a candidate, generate a contradiction,
//! validate it, ground the caption-side cue and assemble a training record.

use misalign_core::backend::{GroundingBackend, LlmBackend, NliBackend};
use misalign_core::candidates::{derive_seed, extract_candidates, sample_candidate, Lexicon, TaggerBackend};
use misalign_core::genpipe::{GenError, Generator};
use misalign_core::grounder::{ground_label, GroundingConfig};
use misalign_core::validator::{score_record, Thresholds, Verdict};
use misalign_core::{AlignedPair, TrainingRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub struct PipelineBackends<'a> {
    pub llm: &'a dyn LlmBackend,
    pub nli: &'a dyn NliBackend,
    pub grounding: &'a dyn GroundingBackend,
    pub tagger: &'a dyn TaggerBackend,
}

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub generator: Generator,
    pub thresholds: Thresholds,
    pub grounding: GroundingConfig,
    pub seed: u64,
    pub negatives_per_pair: u32,
    pub workers: usize,
    /// Relation phrases and stop-list used when grouping tagged tokens.
    pub lexicon: Lexicon,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            generator: Generator::default(),
            thresholds: Thresholds::default(),
            grounding: GroundingConfig::default(),
            seed: 0,
            negatives_per_pair: 1,
            workers: 1,
            lexicon: Lexicon::builtin(),
        }
    }
}

/// Per-stage counters. Every attempt ends in exactly one of `emitted` or a
/// failure counter, so `input` equals their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub input: u64,
    pub no_candidate: u64,
    pub llm_failed: u64,
    pub parse_failed: u64,
    pub generated: u64,
    pub rejected_contradiction: u64,
    pub rejected_feedback: u64,
    pub rejected_both: u64,
    /// The NLI backend failed, so the generation could not be scored.
    pub rejected_unscored: u64,
    pub grounded_failed: u64,
    pub emitted: u64,
}

impl RunStats {
    pub fn failures(&self) -> u64 {
        self.no_candidate
            + self.llm_failed
            + self.parse_failed
            + self.rejected_contradiction
            + self.rejected_feedback
            + self.rejected_both
            + self.rejected_unscored
            + self.grounded_failed
    }

    pub fn reconciles(&self) -> bool {
        self.input == self.emitted + self.failures()
            && self.generated == self.input - self.no_candidate - self.llm_failed - self.parse_failed
    }

    fn add(&mut self, o: &Outcome) {
        self.input += 1;
        match o {
            Outcome::NoCandidate => self.no_candidate += 1,
            Outcome::LlmFailed => self.llm_failed += 1,
            Outcome::ParseFailed => self.parse_failed += 1,
            Outcome::Rejected(v) => {
                self.generated += 1;
                match v {
                    Verdict::RejectContradiction => self.rejected_contradiction += 1,
                    Verdict::RejectFeedback => self.rejected_feedback += 1,
                    _ => self.rejected_both += 1,
                }
            }
            Outcome::Unscored => {
                self.generated += 1;
                self.rejected_unscored += 1;
            }
            Outcome::GroundFailed => {
                self.generated += 1;
                self.grounded_failed += 1;
            }
            Outcome::Emitted(_) => {
                self.generated += 1;
                self.emitted += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    NoCandidate,
    LlmFailed,
    ParseFailed,
    Rejected(Verdict),
    Unscored,
    GroundFailed,
    Emitted(Box<TrainingRecord>),
}

fn record_id(pair: &AlignedPair, draw: u32, per_pair: u32) -> String {
    if per_pair == 1 {
        pair.id.clone()
    } else {
        format!("{}#{draw}", pair.id)
    }
}

/// One negative for one pair. Failures are reported, never raised.
pub fn process_one(pair: &AlignedPair, draw: u32, s: &PipelineSettings, b: &PipelineBackends<'_>) -> Outcome {
    let id = record_id(pair, draw, s.negatives_per_pair);
    let tokens = match b.tagger.tag(&pair.caption) {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!(%id, error = %e, "tagging failed");
            return Outcome::NoCandidate;
        }
    };
    let cands = extract_candidates(&pair.caption, &tokens, &s.lexicon);
    let Ok(cand) = sample_candidate(&cands, derive_seed(s.seed, &pair.id, u64::from(draw))) else {
        tracing::debug!(%id, "no misalignment candidates");
        return Outcome::NoCandidate;
    };
    let gen = match s.generator.generate_misalignment(pair, &cand, b.llm) {
        Ok(g) => g,
        Err(GenError::Backend(e)) => {
            tracing::warn!(%id, error = %e, "llm failed");
            return Outcome::LlmFailed;
        }
        Err(e @ (GenError::ParseFailed { .. } | GenError::CategoryMismatch { .. })) => {
            tracing::debug!(%id, error = %e, "generation rejected");
            return Outcome::ParseFailed;
        }
        Err(e) => {
            tracing::warn!(%id, error = %e, "generation failed");
            return Outcome::LlmFailed;
        }
    };
    let scores = match score_record(&pair.caption, &gen.contradiction_caption, &gen.feedback, b.nli) {
        Ok(sc) => sc,
        Err(e) => {
            tracing::warn!(%id, error = %e, "scoring failed");
            return Outcome::Unscored;
        }
    };
    let verdict = scores.verdict(s.thresholds);
    if !verdict.is_keep() {
        return Outcome::Rejected(verdict);
    }
    let visual = match ground_label(&gen.caption_cue, &pair.image, b.grounding, s.grounding) {
        Ok(v) => v,
        Err(e) => {
            tracing::debug!(%id, error = %e, "grounding failed");
            return Outcome::GroundFailed;
        }
    };
    Outcome::Emitted(Box::new(TrainingRecord {
        id,
        source_dataset: pair.source_dataset.clone(),
        image: pair.image.clone(),
        positive_caption: pair.caption.clone(),
        negative_caption: gen.contradiction_caption,
        misalignment_type: gen.misalignment_type,
        feedback: gen.feedback,
        misalignment_in_text: gen.contradiction_cue,
        visual,
        validation: scores,
    }))
}

/// Runs every pair on a pool of `s.workers` threads. Output follows input
/// order regardless of completion order.
pub fn run_pipeline(
    pairs: &[AlignedPair],
    s: &PipelineSettings,
    b: &PipelineBackends<'_>,
) -> Result<(Vec<TrainingRecord>, RunStats), rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(s.workers.max(1)).build()?;
    let jobs: Vec<(&AlignedPair, u32)> =
        pairs.iter().flat_map(|p| (0..s.negatives_per_pair).map(move |d| (p, d))).collect();
    let outcomes: Vec<Outcome> = pool.install(|| jobs.par_iter().map(|(p, d)| process_one(p, *d, s, b)).collect());
    let mut stats = RunStats::default();
    let mut records = Vec::new();
    for o in outcomes {
        stats.add(&o);
        if let Outcome::Emitted(r) = o {
            records.push(*r);
        }
    }
    debug_assert!(stats.reconciles());
    Ok((records, stats))
}
