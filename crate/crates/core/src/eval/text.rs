//! Sentence-level text overlap metrics and yes/no answer parsing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextMetric {
    Bleu4,
    #[serde(rename = "rougeL")]
    RougeL,
}

/// Lowercase ASCII alphanumeric runs.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU-4 against one reference, uniform weights, brevity penalty.
/// Clipped n-gram precisions for n >= 2 are smoothed as `(m + 1) / (d + 1)`;
/// a zero unigram match gives 0.
pub fn bleu4(reference: &str, hypothesis: &str) -> f64 {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    if h.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let matched: usize = hc.iter().map(|(g, c)| (*c).min(*rc.get(g).unwrap_or(&0))).sum();
        let total = hc.values().sum::<usize>().max(1);
        let (m, d) = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            (matched as f64, total as f64)
        } else {
            (matched as f64 + 1.0, total as f64 + 1.0)
        };
        log_sum += 0.25 * (m / d).ln();
    }
    let (c, rl) = (h.len() as f64, r.len() as f64);
    let bp = if c > rl { 1.0 } else { (1.0 - rl / c).exp() };
    bp * log_sum.exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (beta = 1) from the longest common subsequence.
pub fn rouge_l(reference: &str, hypothesis: &str) -> f64 {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    if r.is_empty() || h.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&r, &h) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / h.len() as f64;
    let rec = l / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

pub fn text_overlap(gt: &str, pred: &str, metric: TextMetric) -> f64 {
    match metric {
        TextMetric::Bleu4 => bleu4(gt, pred),
        TextMetric::RougeL => rouge_l(gt, pred),
    }
}

/// `Some(true)` for "yes", `Some(false)` for "no" after lowercasing and
/// dropping punctuation; anything else is `None`.
pub fn parse_yes_no(answer: &str) -> Option<bool> {
    let cleaned: String = answer
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    match cleaned.trim() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let s = "the duck is swimming not flying";
        assert!((bleu4(s, s) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l(s, s), 1.0);
        assert_eq!(bleu4("red fox jumps high", "blue whale swims deep"), 0.0);
        assert_eq!(rouge_l("red fox", "blue whale"), 0.0);
    }

    #[test]
    fn rouge_by_hand() {
        // LCS 3, P = 3/4, R = 1
        assert!((rouge_l("the cat sat", "the cat sat down") - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn yes_no() {
        assert_eq!(parse_yes_no("Yes."), Some(true));
        assert_eq!(parse_yes_no(" NO! "), Some(false));
        assert_eq!(parse_yes_no("maybe"), None);
        assert_eq!(parse_yes_no("yes, it does"), None);
    }
}
