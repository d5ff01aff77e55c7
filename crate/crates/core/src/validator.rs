//! Entailment-based filtering of generated contradictions and feedback.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, NliBackend};
use crate::scalar::Scalar;

pub const DEFAULT_TAU_C: f64 = 0.25;
pub const DEFAULT_TAU_F: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidatorError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("threshold grid is not sorted ascending")]
    UnsortedGrid,
    #[error("entailment score {0} outside [0, 1]")]
    ScoreOutOfRange(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// The two entailment scores stored with every training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationScores {
    pub contradiction_score: f64,
    pub feedback_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    RejectContradiction,
    RejectFeedback,
    RejectBoth,
}

impl Verdict {
    pub fn is_keep(self) -> bool {
        self == Verdict::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub tau_c: f64,
    pub tau_f: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tau_c: DEFAULT_TAU_C, tau_f: DEFAULT_TAU_F }
    }
}

impl ValidationScores {
    pub fn verdict(&self, t: Thresholds) -> Verdict {
        apply_filter(self.contradiction_score, self.feedback_score, t.tau_c, t.tau_f)
    }
}

/// Keep iff `contradiction < tau_c` and `feedback > tau_f`, both strict.
/// Scores exactly at a threshold are rejected.
pub fn apply_filter<S: Scalar>(contradiction: S, feedback: S, tau_c: S, tau_f: S) -> Verdict {
    match (contradiction < tau_c, feedback > tau_f) {
        (true, true) => Verdict::Keep,
        (false, true) => Verdict::RejectContradiction,
        (true, false) => Verdict::RejectFeedback,
        (false, false) => Verdict::RejectBoth,
    }
}

/// Premise used when scoring feedback.
pub fn feedback_premise(original: &str, contradiction: &str) -> String {
    format!("EXPECTED CAPTION: {contradiction} . ACTUAL CAPTION: {original}")
}

fn non_empty(name: &'static str, s: &str) -> Result<(), ValidatorError> {
    if s.trim().is_empty() {
        Err(ValidatorError::EmptyInput(name))
    } else {
        Ok(())
    }
}

fn checked(score: f64) -> Result<f64, ValidatorError> {
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(ValidatorError::ScoreOutOfRange(score.to_string()))
    }
}

/// Entailment of the contradiction given the original caption. Low is good.
pub fn score_contradiction(
    original: &str,
    contradiction: &str,
    nli: &dyn NliBackend,
) -> Result<f64, ValidatorError> {
    non_empty("original caption", original)?;
    non_empty("contradiction", contradiction)?;
    checked(nli.score_entailment(original, contradiction)?)
}

/// Entailment of the feedback given the EXPECTED/ACTUAL premise. High is good.
pub fn score_feedback(
    original: &str,
    contradiction: &str,
    feedback: &str,
    nli: &dyn NliBackend,
) -> Result<f64, ValidatorError> {
    non_empty("original caption", original)?;
    non_empty("contradiction", contradiction)?;
    non_empty("feedback", feedback)?;
    checked(nli.score_entailment(&feedback_premise(original, contradiction), feedback)?)
}

pub fn score_record(
    original: &str,
    contradiction: &str,
    feedback: &str,
    nli: &dyn NliBackend,
) -> Result<ValidationScores, ValidatorError> {
    Ok(ValidationScores {
        contradiction_score: score_contradiction(original, contradiction, nli)?,
        feedback_score: score_feedback(original, contradiction, feedback, nli)?,
    })
}

fn is_sorted<S: Scalar>(grid: &[S]) -> bool {
    grid.windows(2).all(|w| w[0] <= w[1])
}

/// Retention fraction for every `(grid_c[i], grid_f[j])` pair.
pub fn sweep_thresholds<S: Scalar>(
    scored: &[(S, S)],
    grid_c: &[S],
    grid_f: &[S],
) -> Result<Vec<Vec<S>>, ValidatorError> {
    if scored.is_empty() {
        return Err(ValidatorError::EmptyInput("score list"));
    }
    if grid_c.is_empty() || grid_f.is_empty() {
        return Err(ValidatorError::EmptyInput("threshold grid"));
    }
    if !is_sorted(grid_c) || !is_sorted(grid_f) {
        return Err(ValidatorError::UnsortedGrid);
    }
    let n = scored.len() as u64;
    Ok(grid_c
        .iter()
        .map(|&tc| {
            grid_f
                .iter()
                .map(|&tf| {
                    let kept = scored.iter().filter(|(c, f)| apply_filter(*c, *f, tc, tf).is_keep()).count();
                    S::ratio(kept as u64, n)
                })
                .collect()
        })
        .collect())
}

/// CSV with a `tau_c/tau_f` corner cell, the tau_f grid as header and one
/// row per tau_c value. Cells have four decimals.
pub fn heatmap_csv<S: Scalar>(grid_c: &[S], grid_f: &[S], matrix: &[Vec<S>]) -> String {
    let mut out = String::from("tau_c/tau_f");
    for f in grid_f {
        let _ = write!(out, ",{}", f.to_real());
    }
    out.push('\n');
    for (c, row) in grid_c.iter().zip(matrix) {
        let _ = write!(out, "{}", c.to_real());
        for v in row {
            let _ = write!(out, ",{:.4}", v.to_real());
        }
        out.push('\n');
    }
    out
}

/// Evenly spaced grid `0, step, 2*step, ..., 1`.
pub fn unit_grid(steps: u32) -> Vec<f64> {
    (0..=steps).map(|i| f64::from(i) / f64::from(steps)).collect()
}
