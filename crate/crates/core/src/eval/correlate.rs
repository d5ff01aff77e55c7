//! Relating automatic metric scores to human rater agreement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    Feedback,
    Text,
    Visual,
}

impl std::str::FromStr for Question {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "feedback" => Ok(Question::Feedback),
            "text" => Ok(Question::Text),
            "visual" => Ok(Question::Visual),
            _ => Err(format!("unknown question {s:?}; expected feedback, text or visual")),
        }
    }
}

/// Number of raters (out of three) answering yes to each question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanAgreement {
    pub instance_id: String,
    pub feedback: u8,
    pub text: u8,
    pub visual: u8,
}

impl HumanAgreement {
    pub fn level(&self, q: Question) -> u8 {
        match q {
            Question::Feedback => self.feedback,
            Question::Text => self.text,
            Question::Visual => self.visual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    pub level: u8,
    pub mean: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub levels: Vec<LevelMean>,
    pub spearman: f64,
    /// False when either variable is constant; `spearman` is then 0.
    pub spearman_defined: bool,
}

impl Correlation {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,mean,n\n");
        for l in &self.levels {
            let mean = l.mean.map(|m| format!("{m:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", l.level, mean, l.n);
        }
        out
    }
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation, `None` when undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Mean score per agreement level (0..=3) and the rank correlation between
/// level and score.
pub fn correlate(
    agreements: &[HumanAgreement],
    question: Question,
    scores: &BTreeMap<String, f64>,
) -> Result<Correlation, EvalError> {
    let mut levels = Vec::with_capacity(agreements.len());
    let mut values = Vec::with_capacity(agreements.len());
    for a in agreements {
        let s = scores.get(&a.instance_id).ok_or_else(|| EvalError::MissingInstance(a.instance_id.clone()))?;
        levels.push(f64::from(a.level(question)));
        values.push(*s);
    }
    let rows = (0u8..=3)
        .map(|lvl| {
            let v: Vec<f64> = levels
                .iter()
                .zip(&values)
                .filter(|(l, _)| **l == f64::from(lvl))
                .map(|(_, s)| *s)
                .collect();
            LevelMean { level: lvl, mean: (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64), n: v.len() }
        })
        .collect();
    let rho = spearman(&levels, &values);
    Ok(Correlation { levels: rows, spearman: rho.unwrap_or(0.0), spearman_defined: rho.is_some() })
}
