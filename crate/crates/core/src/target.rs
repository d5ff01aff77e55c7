//! The fine-tuning target string `"<feedback> | <text cue> | <boxes>"`.
//!
//! The box part renders each entry as `[x1, y1, x2, y2] label` and joins
//! entries with `" and "`. The `" | "` delimiter is reserved: a field that
//! contains `|` cannot be rendered.

use thiserror::Error;

use crate::model::{LabeledBox, ModelError, NormBox, VisualAnnotation};

pub const FIELD_SEPARATOR: &str = " | ";
pub const BOX_JOINER: &str = " and ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetError {
    #[error("field {0} contains the reserved separator")]
    SeparatorInField(&'static str),
    #[error("field {0} is empty")]
    EmptyField(&'static str),
    #[error("box label {0:?} contains '['")]
    BracketInLabel(String),
    #[error("expected 2 field separators, found {0}")]
    MalformedSeparators(usize),
    #[error("malformed box string at byte {0}")]
    MalformedBox(usize),
    #[error(transparent)]
    Box(#[from] ModelError),
}

/// The three parts of a target string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub feedback: String,
    pub text_cue: String,
    pub visual: VisualAnnotation,
}

fn check_field(name: &'static str, value: &str) -> Result<(), TargetError> {
    if value.trim().is_empty() {
        return Err(TargetError::EmptyField(name));
    }
    if value.contains('|') {
        return Err(TargetError::SeparatorInField(name));
    }
    Ok(())
}

/// Renders only the box part, e.g. `[277, 26, 664, 477] two men and [608, 3, 729, 998] a rail`.
pub fn render_boxes(visual: &VisualAnnotation) -> Result<String, TargetError> {
    let mut parts = Vec::with_capacity(visual.len());
    for b in visual.boxes() {
        check_field("label", &b.label)?;
        if b.label.contains('[') {
            return Err(TargetError::BracketInLabel(b.label.clone()));
        }
        parts.push(format!("{} {}", b.bbox, b.label));
    }
    Ok(parts.join(BOX_JOINER))
}

pub fn render_target(
    feedback: &str,
    text_cue: &str,
    visual: &VisualAnnotation,
) -> Result<String, TargetError> {
    check_field("feedback", feedback)?;
    check_field("text_cue", text_cue)?;
    let boxes = render_boxes(visual)?;
    Ok([feedback, text_cue, boxes.as_str()].join(FIELD_SEPARATOR))
}

pub fn parse_target(s: &str) -> Result<Target, TargetError> {
    let fields: Vec<&str> = s.split(FIELD_SEPARATOR).collect();
    if fields.len() != 3 {
        return Err(TargetError::MalformedSeparators(fields.len() - 1));
    }
    let (feedback, text_cue, boxes) = (fields[0], fields[1], fields[2]);
    if feedback.trim().is_empty() {
        return Err(TargetError::EmptyField("feedback"));
    }
    if text_cue.trim().is_empty() {
        return Err(TargetError::EmptyField("text_cue"));
    }
    let offset = feedback.len() + text_cue.len() + 2 * FIELD_SEPARATOR.len();
    let visual = parse_boxes(boxes).map_err(|e| match e {
        TargetError::MalformedBox(at) => TargetError::MalformedBox(at + offset),
        other => other,
    })?;
    Ok(Target { feedback: feedback.to_string(), text_cue: text_cue.to_string(), visual })
}

/// Parses `box ( " and " box )*` where `box := "[" int "," int "," int "," int "]" " " label`.
/// Labels may contain spaces (and even `" and "`) but not `[`.
pub fn parse_boxes(s: &str) -> Result<VisualAnnotation, TargetError> {
    let mut boxes = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &s[pos..];
        if !rest.starts_with('[') {
            return Err(TargetError::MalformedBox(pos));
        }
        let close = rest.find(']').ok_or(TargetError::MalformedBox(pos))?;
        let bbox = parse_coords(&rest[1..close]).map_err(|e| match e {
            TargetError::Box(m) => TargetError::Box(m),
            _ => TargetError::MalformedBox(pos),
        })?;
        let after = &rest[close + 1..];
        let label_part = after.strip_prefix(' ').ok_or(TargetError::MalformedBox(pos + close + 1))?;
        // The next entry starts at the next " and [" occurrence.
        let next = label_part.find(&format!("{BOX_JOINER}["));
        let label = match next {
            Some(i) => &label_part[..i],
            None => label_part,
        };
        if label.trim().is_empty() || label.contains('[') {
            return Err(TargetError::MalformedBox(pos + close + 2));
        }
        boxes.push(LabeledBox { bbox, label: label.to_string() });
        match next {
            Some(i) => pos += close + 2 + i + BOX_JOINER.len(),
            None => break,
        }
    }
    Ok(VisualAnnotation::new(boxes)?)
}

fn parse_coords(inner: &str) -> Result<NormBox, TargetError> {
    let nums = inner
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|_| TargetError::MalformedBox(0)))
        .collect::<Result<Vec<_>, _>>()?;
    match nums[..] {
        [x1, y1, x2, y2] => Ok(NormBox::new(x1, y1, x2, y2)?),
        _ => Err(TargetError::MalformedBox(0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nb(x1: i64, y1: i64, x2: i64, y2: i64) -> NormBox {
        NormBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn duck_row_renders() {
        let v = VisualAnnotation::single(nb(339, 245, 581, 834), "duck swimming").unwrap();
        let s = render_target("The duck is swimming, not flying", "duck flying", &v).unwrap();
        assert_eq!(
            s,
            "The duck is swimming, not flying | duck flying | [339, 245, 581, 834] duck swimming"
        );
        let t = parse_target(&s).unwrap();
        assert_eq!(t.feedback, "The duck is swimming, not flying");
        assert_eq!(t.text_cue, "duck flying");
        assert_eq!(t.visual, v);
    }

    #[test]
    fn two_boxes_by_hand() {
        let t = parse_target("a | b | [0, 0, 10, 10] c and [1, 1, 2, 2] d").unwrap();
        assert_eq!(t.visual.boxes().len(), 2);
        assert_eq!(t.visual.boxes()[0].label, "c");
        assert_eq!(t.visual.boxes()[1].bbox, nb(1, 1, 2, 2));
        assert_eq!(
            render_target(&t.feedback, &t.text_cue, &t.visual).unwrap(),
            "a | b | [0, 0, 10, 10] c and [1, 1, 2, 2] d"
        );
    }

    #[test]
    fn label_may_contain_and() {
        let t = parse_target("f | c | [0, 0, 5, 5] salt and pepper and [1, 1, 9, 9] bowl").unwrap();
        let labels: Vec<_> = t.visual.boxes().iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["salt and pepper", "bowl"]);
    }

    #[test]
    fn missing_field() {
        assert_eq!(parse_target("a | b"), Err(TargetError::MalformedSeparators(1)));
        assert_eq!(parse_target("a | b | c | d"), Err(TargetError::MalformedSeparators(3)));
    }

    #[test]
    fn malformed_boxes() {
        assert!(matches!(parse_target("a | b | 0, 0, 1, 1 x"), Err(TargetError::MalformedBox(_))));
        assert!(matches!(parse_target("a | b | [0, 0, 1] x"), Err(TargetError::MalformedBox(_))));
        assert!(matches!(parse_target("a | b | [0, 0, 1, 1]"), Err(TargetError::MalformedBox(_))));
        assert!(matches!(parse_target("a | b | [0, 0, x, 1] y"), Err(TargetError::MalformedBox(_))));
        assert_eq!(
            parse_target("a | b | [0, 0, 1001, 1] y"),
            Err(TargetError::Box(ModelError::OutOfRange(1001)))
        );
    }

    #[test]
    fn separator_in_field_rejected() {
        let v = VisualAnnotation::single(nb(0, 0, 1, 1), "x").unwrap();
        assert_eq!(
            render_target("a | b", "c", &v),
            Err(TargetError::SeparatorInField("feedback"))
        );
        let bad = VisualAnnotation::single(nb(0, 0, 1, 1), "x|y").unwrap();
        assert_eq!(render_target("a", "c", &bad), Err(TargetError::SeparatorInField("label")));
    }

    fn word() -> impl Strategy<Value = String> {
        "[A-Za-z0-9,.'-]{1,8}"
    }

    fn phrase() -> impl Strategy<Value = String> {
        prop::collection::vec(word(), 1..6).prop_map(|w| w.join(" "))
    }

    fn norm_box() -> impl Strategy<Value = NormBox> {
        (0i64..1000, 0i64..1000)
            .prop_flat_map(|(x1, y1)| (Just(x1), Just(y1), x1 + 1..=1000, y1 + 1..=1000))
            .prop_map(|(x1, y1, x2, y2)| nb(x1, y1, x2, y2))
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(
            feedback in phrase(),
            cue in phrase(),
            entries in prop::collection::vec((norm_box(), phrase()), 1..4),
        ) {
            let visual = VisualAnnotation::new(
                entries.into_iter().map(|(bbox, label)| LabeledBox { bbox, label }).collect()
            ).unwrap();
            let s = render_target(&feedback, &cue, &visual).unwrap();
            let t = parse_target(&s).unwrap();
            prop_assert_eq!(&t.feedback, &feedback);
            prop_assert_eq!(&t.text_cue, &cue);
            prop_assert_eq!(&t.visual, &visual);
            prop_assert_eq!(render_target(&t.feedback, &t.text_cue, &t.visual).unwrap(), s);
        }
    }
}
