//! Worked examples printed alongside the method: generation outputs, the
//! training-set table rows and the filter examples.

use misalign_core::backend::{BackendError, DecodingParams, GroundingBackend, LlmBackend};
use misalign_core::genpipe::{parse_generation, parse_merge, Generator, TemplateKind};
use misalign_core::grounder::{ground_label, ground_labels, GroundingConfig, PixelBox};
use misalign_core::mock::{GroundingEntry, MockFixtures, MockGrounding, MockLlm, MockNli, NliEntry};
use misalign_core::validator::{apply_filter, feedback_premise, score_record, Thresholds, Verdict};
use misalign_core::{
    make_norm_box, parse_target, render_target, AlignedPair, CaptionProvenance, ImageKind, ImageRef, LabeledBox,
    MisalignmentType, VisualAnnotation,
};

const COCO_GENERATED: &str = "CONTRADICTION: A crystal bowl filled with oranges beneath a table.
MISALIGNMENT: The bowl is on top of the table (CAPTION: bowl on top of a table), not beneath it (CONTRADICTION: bowl beneath a table).
MISALIGNMENT TYPE: Relation
";

const PICKAPIC_GENERATED: &str = "CAPTION: A white cat is sitting on the grass in front of a house with trees and a blue sky in the background .
CONTRADICTION: A white cat is running on the grass in front of a house with trees and a blue sky in the background.
MISALIGNMENT: The cat is not running (CONTRADICTION: cat running), instead is sitting on the grass (CAPTION: cat sitting)
MISALIGNMENT TYPE: Action/Verb
";

const ADE_GENERATED: &str = "CONTRADICTION: A wall with light and dust particles under a metal beam.
MISALIGNMENT: The beam is wood (CAPTION: wooden beam), not metal (CONTRADICTION: metal beam)
MISALIGNMENT TYPE: Attribute/Adjective
";

const SEETRUE_GENERATED: &str = "CAPTION: A cat is holding a frisbee in its mouth
FEEDBACKS: [\"A dog is holding a frisbee in its mouth\", \"A dog is holding a frisbee in its mouth.\", \"A dog is holding a frisbee, not a cat\"]
MISALIGNMENT: The animal holding the frisbee is a dog (CONTRADICTION: dog holding a frisbee), not a cat (CAPTION: cat holding a frisbee)
";

#[test]
fn coco_relation_block() {
    let r = parse_generation(COCO_GENERATED).unwrap();
    assert_eq!(r.contradiction_caption, "A crystal bowl filled with oranges beneath a table.");
    assert_eq!(r.feedback, "The bowl is on top of the table, not beneath it.");
    assert_eq!(r.caption_cue, "bowl on top of a table");
    assert_eq!(r.contradiction_cue, "bowl beneath a table");
    assert_eq!(r.misalignment_type, MisalignmentType::Relation);
    assert_eq!(r.raw_llm_text, COCO_GENERATED);
}

#[test]
fn pickapic_action_block_with_echoed_caption() {
    let r = parse_generation(PICKAPIC_GENERATED).unwrap();
    assert_eq!(
        r.contradiction_caption,
        "A white cat is running on the grass in front of a house with trees and a blue sky in the background."
    );
    assert_eq!(r.feedback, "The cat is not running, instead is sitting on the grass");
    assert_eq!(r.caption_cue, "cat sitting");
    assert_eq!(r.contradiction_cue, "cat running");
    assert_eq!(r.misalignment_type, MisalignmentType::Action);
}

#[test]
fn ade20k_attribute_block() {
    let r = parse_generation(ADE_GENERATED).unwrap();
    assert_eq!(r.feedback, "The beam is wood, not metal");
    assert_eq!((r.caption_cue.as_str(), r.contradiction_cue.as_str()), ("wooden beam", "metal beam"));
}

#[test]
fn seetrue_merge_block() {
    let l = parse_merge(SEETRUE_GENERATED).unwrap();
    assert_eq!(l.feedback, "The animal holding the frisbee is a dog, not a cat");
    assert_eq!(l.contradiction_cue, "dog holding a frisbee");
    assert_eq!(l.caption_cue, "cat holding a frisbee");
}

fn image(uri: &str, w: u32, h: u32) -> ImageRef {
    ImageRef::new(uri, w, h, ImageKind::Natural).unwrap()
}

#[test]
fn generation_through_fixture_backend() {
    let g = Generator::default();
    let caption = "A crystal bowl filled with oranges on top of a table.";
    let pair = AlignedPair::new("coco-1", image("bowl.jpg", 640, 480), caption, CaptionProvenance::HumanAnnotated, "coco")
        .unwrap();
    let mut fx = MockFixtures::default();
    fx.insert_llm(&g.prompt_for("coco", MisalignmentType::Relation, caption).unwrap(), COCO_GENERATED);
    let cand = misalign_core::candidates::MisalignmentCandidate {
        category: MisalignmentType::Relation,
        span: (35, 38),
        surface: "on".into(),
    };
    let r = g.generate_misalignment(&pair, &cand, &MockLlm::new(&fx)).unwrap();
    assert_eq!(r.contradiction_cue, "bowl beneath a table");
}

#[test]
fn narrative_summarization_example() {
    let g = Generator::default();
    let narrative = "In this picture we can see a flower vase and a name board on the platform and here we can see four people are standing on the floor. In the background we can see the name on the wall and we can see plants, roof and lights.";
    let prompt = g.templates.get("ade20k", TemplateKind::Summarize).unwrap().render(&[("caption", narrative)]);
    assert!(prompt.ends_with(&format!("DESCRIPTION: {narrative}\nCAPTION: \n")));
    let mut fx = MockFixtures::default();
    fx.insert_llm(&prompt, "CAPTION: People standing on the floor near a flower vase and a name board.");
    let caption = g.summarize_narrative(narrative, &MockLlm::new(&fx)).unwrap();
    assert_eq!(caption, "People standing on the floor near a flower vase and a name board.");
}

#[test]
fn merge_through_fixture_backend() {
    struct Canned;
    impl LlmBackend for Canned {
        fn complete_chat(&self, prompt: &str, _: &DecodingParams) -> Result<String, BackendError> {
            assert!(prompt.ends_with(
                "CAPTION: A cat is holding a frisbee in its mouth\nFEEDBACKS: [\"A dog is holding a frisbee in its mouth\", \"A dog is holding a frisbee in its mouth.\", \"A dog is holding a frisbee, not a cat\"]\nMISALIGNMENT: \n"
            ));
            Ok(SEETRUE_GENERATED.to_string())
        }
    }
    let fbs = [
        "A dog is holding a frisbee in its mouth",
        "A dog is holding a frisbee in its mouth.",
        "A dog is holding a frisbee, not a cat",
    ]
    .map(|s| Some(s.to_string()));
    let m = Generator::default().merge_human_feedbacks("A cat is holding a frisbee in its mouth", &fbs, &Canned).unwrap();
    assert_eq!(m.feedback, "The animal holding the frisbee is a dog, not a cat");
    assert_eq!(m.text_cue(), "cat holding a frisbee");
    assert_eq!(m.visual_label(), "dog holding a frisbee");
}

fn nb(x1: i64, y1: i64, x2: i64, y2: i64) -> misalign_core::NormBox {
    make_norm_box(x1, y1, x2, y2).unwrap()
}

fn table_rows() -> Vec<(&'static str, &'static str, VisualAnnotation, &'static str)> {
    let one = |b, l: &str| VisualAnnotation::single(b, l).unwrap();
    vec![
        ("The person is dressed as a joker, not a clown", "clown", one(nb(2, 3, 996, 995), "joker"),
         "The person is dressed as a joker, not a clown | clown | [2, 3, 996, 995] joker"),
        ("The liquid is blue, not red", "red liquid", one(nb(380, 308, 944, 666), "blue liquid"),
         "The liquid is blue, not red | red liquid | [380, 308, 944, 666] blue liquid"),
        ("The kitchen is missing a toaster, but has a refrigerator.", "toaster", one(nb(193, 327, 347, 553), "refrigerator"),
         "The kitchen is missing a toaster, but has a refrigerator. | toaster | [193, 327, 347, 553] refrigerator"),
        ("The men are jumping over a rail, not under it", "jumping under a rail",
         VisualAnnotation::new(vec![
             LabeledBox { bbox: nb(277, 26, 664, 477), label: "two men".into() },
             LabeledBox { bbox: nb(608, 3, 729, 998), label: "a rail".into() },
         ]).unwrap(),
         "The men are jumping over a rail, not under it | jumping under a rail | [277, 26, 664, 477] two men and [608, 3, 729, 998] a rail"),
        ("The duck is swimming, not flying", "duck flying", one(nb(339, 245, 581, 834), "duck swimming"),
         "The duck is swimming, not flying | duck flying | [339, 245, 581, 834] duck swimming"),
        ("The room has a view of trees, not a lake", "a view of a lake", one(nb(409, 727, 559, 930), "trees"),
         "The room has a view of trees, not a lake | a view of a lake | [409, 727, 559, 930] trees"),
    ]
}

#[test]
fn training_table_rows_render_and_parse() {
    for (feedback, cue, visual, expected) in table_rows() {
        assert_eq!(render_target(feedback, cue, &visual).unwrap(), expected);
        let t = parse_target(expected).unwrap();
        assert_eq!((t.feedback.as_str(), t.text_cue.as_str(), &t.visual), (feedback, cue, &visual));
    }
}

#[test]
fn two_cue_grounding_concatenates_in_query_order() {
    // 1000x1000 image so pixel and grid coordinates coincide.
    let img = image("flickr.jpg", 1000, 1000);
    let entry = |label: &str, b: [f64; 4]| GroundingEntry {
        image_uri: img.uri.clone(),
        label: label.into(),
        boxes: vec![PixelBox::new(b[0], b[1], b[2], b[3], 0.8)],
    };
    let fx = MockFixtures {
        grounding: vec![entry("two men", [277.0, 26.0, 664.0, 477.0]), entry("a rail", [608.0, 3.0, 729.0, 998.0])],
        ..Default::default()
    };
    let g = MockGrounding::new(&fx);
    let v = ground_labels(&["two men", "a rail"], &img, &g, GroundingConfig::default()).unwrap();
    assert_eq!(
        render_target("f", "c", &v).unwrap(),
        "f | c | [277, 26, 664, 477] two men and [608, 3, 729, 998] a rail"
    );
}

#[test]
fn duck_grounding_on_scaled_image() {
    // 1024x768 pixels; the fixture box maps to the published grid box.
    let img = image("openimages/duck.jpg", 1024, 768);
    let px = PixelBox::new(347.136, 188.16, 594.944, 640.512, 0.91);
    let fx = MockFixtures {
        grounding: vec![GroundingEntry { image_uri: img.uri.clone(), label: "duck swimming".into(), boxes: vec![px] }],
        ..Default::default()
    };
    let v = ground_label("duck swimming", &img, &MockGrounding::new(&fx), GroundingConfig::default()).unwrap();
    assert_eq!(v, VisualAnnotation::single(nb(339, 245, 581, 834), "duck swimming").unwrap());
    assert!(MockGrounding::new(&fx).detect_grounded_boxes(&img, "duck flying").is_err());
}

#[test]
fn filter_examples() {
    let t = Thresholds::default();
    assert_eq!(apply_filter(0.02, 0.97, t.tau_c, t.tau_f), Verdict::Keep);
    assert_eq!(apply_filter(0.7, 0.95, t.tau_c, t.tau_f), Verdict::RejectContradiction);
    assert_eq!(apply_filter(0.06, 0.01, t.tau_c, t.tau_f), Verdict::RejectFeedback);
}

#[test]
fn filter_examples_through_scoring() {
    let a = (
        "A black cat playing on top of a wooden chair.",
        "A black cat playing underneath a wooden chair",
        "The cat is on top of the chair, not underneath it.",
        (0.02, 0.97),
    );
    let b = (
        "The man is riding along the beach in a two-wheeled cart pulled by a horse.",
        "The man is driving along the beach in a two-wheeled cart  pulled by a horse.",
        "The man is riding along the beach, not driving",
        (0.7, 0.95),
    );
    let c = (
        "a dining room table with a bottle of wine and wine glasses and a pot of carrots",
        "a dining room table with a bottle of wine and wine glasses and a pot of potatoes",
        "The carrots are replaced with potatoes.",
        (0.06, 0.01),
    );
    let mut fx = MockFixtures::default();
    for (o, k, f, (sc, sf)) in [a, b, c] {
        fx.nli.push(NliEntry { premise: o.into(), hypothesis: k.into(), score: sc });
        fx.nli.push(NliEntry { premise: feedback_premise(o, k), hypothesis: f.into(), score: sf });
    }
    let nli = MockNli::new(&fx);
    let verdicts: Vec<Verdict> = [a, b, c]
        .iter()
        .map(|(o, k, f, _)| score_record(o, k, f, &nli).unwrap().verdict(Thresholds::default()))
        .collect();
    assert_eq!(verdicts, [Verdict::Keep, Verdict::RejectContradiction, Verdict::RejectFeedback]);
}
