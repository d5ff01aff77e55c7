//! Box overlap, one-to-one matching and detection F1.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{LabeledBox, NormBox};
use crate::scalar::{harmonic_mean, Scalar};

/// Intersection and union areas on the integer grid.
pub fn overlap(a: &NormBox, b: &NormBox) -> (u64, u64) {
    let w = a.x2().min(b.x2()).saturating_sub(a.x1().max(b.x1()));
    let h = a.y2().min(b.y2()).saturating_sub(a.y1().max(b.y1()));
    let inter = u64::from(w) * u64::from(h);
    (inter, a.area() + b.area() - inter)
}

/// Intersection over union. Exact for rational scalars.
pub fn iou<S: Scalar>(a: &NormBox, b: &NormBox) -> S {
    let (inter, union) = overlap(a, b);
    S::ratio(inter, union)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::Add for MatchCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Compares `i1/u1` with `i2/u2` without rounding.
fn cmp_ratio((i1, u1): (u64, u64), (i2, u2): (u64, u64)) -> Ordering {
    (u128::from(i1) * u128::from(u2)).cmp(&(u128::from(i2) * u128::from(u1)))
}

/// Pairs `(pred, gt)` of a one-to-one matching. Pairs are taken greedily by
/// descending IoU (ties by pred index, then gt index) among pairs with
/// IoU >= `t`. Greedy selection can strand a prediction whose only
/// qualifying partner was taken by a better-overlapping one, so the greedy
/// result is then extended along augmenting paths until no unmatched pred
/// can be matched. The matching size is therefore maximal.
pub fn match_pairs<S: Scalar>(pred: &[NormBox], gt: &[NormBox], t: S, compatible: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize, (u64, u64))> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let o = overlap(p, g);
            if compatible(i, j) && S::ratio(o.0, o.1) >= t {
                edges.push((i, j, o));
            }
        }
    }
    edges.sort_by(|a, b| cmp_ratio(b.2, a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut pred_to: Vec<Option<usize>> = vec![None; pred.len()];
    let mut gt_to: Vec<Option<usize>> = vec![None; gt.len()];
    for &(i, j, _) in &edges {
        if pred_to[i].is_none() && gt_to[j].is_none() {
            pred_to[i] = Some(j);
            gt_to[j] = Some(i);
        }
    }

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); pred.len()];
    for &(i, j, _) in &edges {
        adj[i].push(j);
    }
    for i in 0..pred.len() {
        if pred_to[i].is_none() {
            let mut seen = vec![false; gt.len()];
            augment(i, &adj, &mut seen, &mut pred_to, &mut gt_to);
        }
    }
    pred_to.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect()
}

fn augment(
    i: usize,
    adj: &[Vec<usize>],
    seen: &mut [bool],
    pred_to: &mut [Option<usize>],
    gt_to: &mut [Option<usize>],
) -> bool {
    for &j in &adj[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        let free = match gt_to[j] {
            None => true,
            Some(k) => augment(k, adj, seen, pred_to, gt_to),
        };
        if free {
            pred_to[i] = Some(j);
            gt_to[j] = Some(i);
            return true;
        }
    }
    false
}

fn counts(n_pred: usize, n_gt: usize, tp: usize) -> MatchCounts {
    MatchCounts { tp: tp as u64, fp: (n_pred - tp) as u64, fn_: (n_gt - tp) as u64 }
}

/// Label-agnostic matching at IoU threshold `t`.
pub fn match_boxes<S: Scalar>(pred: &[NormBox], gt: &[NormBox], t: S) -> MatchCounts {
    counts(pred.len(), gt.len(), match_pairs(pred, gt, t, |_, _| true).len())
}

/// Matching that optionally also requires equal lowercase labels.
pub fn match_labeled<S: Scalar>(pred: &[LabeledBox], gt: &[LabeledBox], t: S, label_aware: bool) -> MatchCounts {
    let pb: Vec<NormBox> = pred.iter().map(|b| b.bbox).collect();
    let gb: Vec<NormBox> = gt.iter().map(|b| b.bbox).collect();
    let same = |i: usize, j: usize| !label_aware || pred[i].label.to_lowercase() == gt[j].label.to_lowercase();
    counts(pred.len(), gt.len(), match_pairs(&pb, &gb, t, same).len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf<S> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
}

/// Precision, recall and F1 from counts. Nothing predicted and nothing
/// expected scores 1; exactly one side empty scores 0.
pub fn prf<S: Scalar>(c: MatchCounts) -> Prf<S> {
    let n_pred = c.tp + c.fp;
    let n_gt = c.tp + c.fn_;
    match (n_pred, n_gt) {
        (0, 0) => Prf { precision: S::one(), recall: S::one(), f1: S::one() },
        (0, _) | (_, 0) => Prf { precision: S::zero(), recall: S::zero(), f1: S::zero() },
        _ => {
            let precision = S::ratio(c.tp, n_pred);
            let recall = S::ratio(c.tp, n_gt);
            Prf { precision, recall, f1: harmonic_mean(precision, recall) }
        }
    }
}

/// Micro-averaged P/R/F1 over instances: counts are summed before dividing.
pub fn visual_f1<S: Scalar>(instances: &[(Vec<NormBox>, Vec<NormBox>)], t: S) -> Prf<S> {
    prf(instances.iter().map(|(p, g)| match_boxes(p, g, t)).sum())
}
