//! Metric implementations checked against independent oracles.

use std::path::PathBuf;

use misalign_core::eval::{bleu4, iou, match_boxes, rouge_l, visual_f1};
use misalign_core::{make_norm_box, Exact, NormBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

fn nb(x1: i64, y1: i64, x2: i64, y2: i64) -> NormBox {
    make_norm_box(x1, y1, x2, y2).unwrap()
}

fn random_box(rng: &mut ChaCha8Rng, hi: i64) -> NormBox {
    let (a, b) = (rng.gen_range(0..hi), rng.gen_range(0..hi));
    let (c, d) = (rng.gen_range(0..hi), rng.gen_range(0..hi));
    let (x1, x2) = if a == b { (a, a + 1) } else { (a.min(b), a.max(b)) };
    let (y1, y2) = if c == d { (c, c + 1) } else { (c.min(d), c.max(d)) };
    nb(x1, y1, x2, y2)
}

/// Unit cells `[x, x+1) x [y, y+1)` covered by a box, counted per axis.
fn cells(b: &NormBox) -> (Vec<bool>, Vec<bool>) {
    let xs = (0..1000u32).map(|x| b.x1() <= x && x < b.x2()).collect();
    let ys = (0..1000u32).map(|y| b.y1() <= y && y < b.y2()).collect();
    (xs, ys)
}

fn cell_iou(a: &NormBox, b: &NormBox) -> f64 {
    let (ax, ay) = cells(a);
    let (bx, by) = cells(b);
    let count = |v: &[bool]| v.iter().filter(|c| **c).count() as u64;
    let both = |p: &[bool], q: &[bool]| p.iter().zip(q).filter(|(s, t)| **s && **t).count() as u64;
    let inter = both(&ax, &bx) * both(&ay, &by);
    let union = count(&ax) * count(&ay) + count(&bx) * count(&by) - inter;
    inter as f64 / union as f64
}

#[test]
fn iou_matches_cell_count_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..10_000 {
        // Half the pairs live on a small grid so overlaps are common.
        let hi = if k % 2 == 0 { 1000 } else { 40 };
        let (a, b) = (random_box(&mut rng, hi), random_box(&mut rng, hi));
        let got: f64 = iou(&a, &b);
        let want = cell_iou(&a, &b);
        assert!((got - want).abs() <= 1e-12, "{a} {b}: {got} vs {want}");
        assert_eq!(got, iou::<f64>(&b, &a));
    }
}

#[test]
fn iou_published_values() {
    let a = nb(0, 0, 1000, 500);
    let b = nb(0, 0, 500, 1000);
    assert_eq!(iou::<Exact>(&a, &b), Exact::new(1, 3));
    assert_eq!(cell_iou(&a, &b), 1.0 / 3.0);
    assert_eq!(iou::<f64>(&nb(0, 0, 500, 500), &nb(500, 500, 1000, 1000)), 0.0);
}

/// Largest number of disjoint (pred, gt) pairs with IoU >= 3/4, by exhaustive search.
fn brute_force_tp(pred: &[NormBox], gt: &[NormBox]) -> u64 {
    fn ok(p: &NormBox, g: &NormBox) -> bool {
        let w = p.x2().min(g.x2()).saturating_sub(p.x1().max(g.x1())) as u64;
        let h = p.y2().min(g.y2()).saturating_sub(p.y1().max(g.y1())) as u64;
        let inter = w * h;
        let union = p.area() + g.area() - inter;
        4 * inter >= 3 * union
    }
    fn go(i: usize, pred: &[NormBox], gt: &[NormBox], used: &mut Vec<bool>) -> u64 {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, pred, gt, used);
        for j in 0..gt.len() {
            if !used[j] && ok(&pred[i], &gt[j]) {
                used[j] = true;
                best = best.max(1 + go(i + 1, pred, gt, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, pred, gt, &mut vec![false; gt.len()])
}

fn jitter(rng: &mut ChaCha8Rng, c: &NormBox, amount: i64) -> NormBox {
    let mut j = |v: u32| (i64::from(v) + rng.gen_range(-amount..=amount)).clamp(0, 1000);
    let (x1, y1, x2, y2) = (j(c.x1()), j(c.y1()), j(c.x2()), j(c.y2()));
    let (x1, x2) = if x1 >= x2 { (x1.min(999), x1.min(999) + 1) } else { (x1, x2) };
    let (y1, y2) = if y1 >= y2 { (y1.min(999), y1.min(999) + 1) } else { (y1, y2) };
    nb(x1, y1, x2, y2)
}

#[test]
fn matching_equals_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        // Boxes clustered around one or two centres give many near-threshold pairs.
        let centres: Vec<NormBox> = (0..rng.gen_range(1..=2)).map(|_| random_box(&mut rng, 1000)).collect();
        let amount = rng.gen_range(5..40);
        let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<NormBox> {
            (0..n).map(|_| {
                let c = centres[rng.gen_range(0..centres.len())];
                jitter(rng, &c, amount)
            }).collect()
        };
        let np = rng.gen_range(0..=4);
        let ng = rng.gen_range(0..=4);
        let pred = draw(np, &mut rng);
        let gt = draw(ng, &mut rng);
        let c = match_boxes(&pred, &gt, 0.75);
        assert_eq!(c.tp, brute_force_tp(&pred, &gt), "{pred:?} {gt:?}");
        assert_eq!(c.tp + c.fp, pred.len() as u64);
        assert_eq!(c.tp + c.fn_, gt.len() as u64);
    }
}

#[test]
fn two_preds_one_gt() {
    let gt = [nb(0, 0, 100, 100)];
    let pred = [nb(0, 0, 100, 90), nb(600, 600, 700, 700)];
    let c = match_boxes(&pred, &gt, 0.75);
    assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 0));
    let p = visual_f1::<Exact>(&[(pred.to_vec(), gt.to_vec())], Exact::new(3, 4));
    assert_eq!((p.precision, p.recall, p.f1), (Exact::new(1, 2), Exact::new(1, 1), Exact::new(2, 3)));
}

#[derive(Deserialize)]
struct TextCase {
    reference: String,
    hypothesis: String,
    bleu4: f64,
    #[serde(rename = "rougeL")]
    rouge_l: f64,
}

#[test]
fn text_metrics_match_reference_implementation() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/text_metrics_reference.json");
    let cases: Vec<TextCase> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cases.len(), 50);
    for c in &cases {
        let b = bleu4(&c.reference, &c.hypothesis);
        let r = rouge_l(&c.reference, &c.hypothesis);
        assert!((b - c.bleu4).abs() <= 1e-6, "bleu {:?} {:?}: {b} vs {}", c.reference, c.hypothesis, c.bleu4);
        assert!((r - c.rouge_l).abs() <= 1e-6, "rouge {:?} {:?}: {r} vs {}", c.reference, c.hypothesis, c.rouge_l);
    }
}

#[test]
fn text_metric_edge_values() {
    let s = "the duck is swimming on the lake";
    assert_eq!(bleu4(s, s), 1.0);
    assert_eq!(rouge_l(s, s), 1.0);
    assert_eq!(bleu4("red car", "blue bike"), 0.0);
    assert_eq!(rouge_l("red car", "blue bike"), 0.0);
    let b = bleu4("the cat sat", "the cat sat down");
    assert!((b - 0.6580370064762462).abs() < 1e-12);
}
