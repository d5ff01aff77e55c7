//! Parser for the keyed-line output grammar of the generation prompts.
//!
//! ```text
//! CONTRADICTION: <caption>
//! MISALIGNMENT: <feedback with (CAPTION: ...) and (CONTRADICTION: ...) cues>
//! MISALIGNMENT TYPE: <Object/Noun | Attribute/Adjective | Action/Verb | Relation>
//! ```

use thiserror::Error;

use crate::model::{GenerationRecord, MisalignmentType};

pub const KEY_CONTRADICTION: &str = "CONTRADICTION:";
pub const KEY_MISALIGNMENT: &str = "MISALIGNMENT:";
pub const KEY_TYPE: &str = "MISALIGNMENT TYPE:";
pub const KEY_CAPTION: &str = "CAPTION:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing {0} line")]
    MissingKey(&'static str),
    #[error("missing ({0} ...) cue")]
    MissingCue(&'static str),
    #[error("unknown misalignment type {0:?}")]
    UnknownType(String),
    #[error("feedback is empty once cues are removed")]
    EmptyFeedback,
    #[error("contradiction repeats the input caption")]
    Unchanged,
}

/// Feedback sentence and both cues taken from one MISALIGNMENT line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MisalignmentLine {
    pub feedback: String,
    pub caption_cue: String,
    pub contradiction_cue: String,
}

/// Value of the first line starting with `key`. Whitespace before the key is
/// tolerated; matching is case-sensitive.
pub fn keyed_line<'a>(raw: &'a str, key: &str) -> Option<&'a str> {
    raw.lines().find_map(|l| l.trim_start().strip_prefix(key)).map(str::trim)
}

/// Content of the first balanced `(KEY ...)` parenthetical, trimmed.
pub fn first_cue<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let open = format!("({key}");
    let start = line.find(&open)?;
    let body = start + open.len();
    let mut depth = 1usize;
    for (i, c) in line[body..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    let cue = line[body..body + i].trim();
                    return (!cue.is_empty()).then_some(cue);
                }
            }
            _ => {}
        }
    }
    None
}

/// Removes every parenthetical (with the whitespace before it) and collapses
/// whitespace.
pub fn strip_parentheticals(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut depth = 0usize;
    for c in line.chars() {
        match c {
            '(' => {
                if depth == 0 {
                    let trimmed = out.trim_end().len();
                    out.truncate(trimmed);
                }
                depth += 1;
            }
            ')' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_misalignment_line(line: &str) -> Result<MisalignmentLine, ParseError> {
    let caption_cue = first_cue(line, KEY_CAPTION).ok_or(ParseError::MissingCue("CAPTION"))?;
    let contradiction_cue =
        first_cue(line, KEY_CONTRADICTION).ok_or(ParseError::MissingCue("CONTRADICTION"))?;
    let feedback = strip_parentheticals(line);
    if feedback.is_empty() {
        return Err(ParseError::EmptyFeedback);
    }
    Ok(MisalignmentLine {
        feedback,
        caption_cue: caption_cue.to_string(),
        contradiction_cue: contradiction_cue.to_string(),
    })
}

/// Parses a full generation response. An echoed `CAPTION:` line is ignored.
pub fn parse_generation(raw: &str) -> Result<GenerationRecord, ParseError> {
    let contradiction = keyed_line(raw, KEY_CONTRADICTION)
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::MissingKey("CONTRADICTION"))?;
    let misalignment = keyed_line(raw, KEY_MISALIGNMENT)
        .filter(|s| !s.is_empty())
        .ok_or(ParseError::MissingKey("MISALIGNMENT"))?;
    let type_text = keyed_line(raw, KEY_TYPE).ok_or(ParseError::MissingKey("MISALIGNMENT TYPE"))?;
    let misalignment_type: MisalignmentType =
        type_text.parse().map_err(|_| ParseError::UnknownType(type_text.to_string()))?;
    let line = parse_misalignment_line(misalignment)?;
    Ok(GenerationRecord {
        contradiction_caption: contradiction.to_string(),
        feedback: line.feedback,
        caption_cue: line.caption_cue,
        contradiction_cue: line.contradiction_cue,
        misalignment_type,
        raw_llm_text: raw.to_string(),
    })
}

/// Writes a record back in the output grammar, cues appended after the
/// feedback sentence.
pub fn render_generation(
    contradiction: &str,
    feedback: &str,
    caption_cue: &str,
    contradiction_cue: &str,
    misalignment_type: MisalignmentType,
) -> String {
    format!(
        "{KEY_CONTRADICTION} {contradiction}\n{KEY_MISALIGNMENT} {feedback} ({KEY_CAPTION} {caption_cue}) ({KEY_CONTRADICTION} {contradiction_cue})\n{KEY_TYPE} {}\n",
        misalignment_type.prompt_label()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beam_line() {
        let l = parse_misalignment_line(
            "The beam is wood (CAPTION: wooden beam), not metal (CONTRADICTION: metal beam)",
        )
        .unwrap();
        assert_eq!(l.feedback, "The beam is wood, not metal");
        assert_eq!(l.caption_cue, "wooden beam");
        assert_eq!(l.contradiction_cue, "metal beam");
    }

    #[test]
    fn first_cue_wins_and_nesting_balances() {
        let line = "x (CAPTION: a (b) c) y (CAPTION: second) (CONTRADICTION: z)";
        assert_eq!(first_cue(line, KEY_CAPTION), Some("a (b) c"));
        assert_eq!(strip_parentheticals(line), "x y");
    }

    #[test]
    fn missing_type_line() {
        let raw = "CONTRADICTION: a dog\nMISALIGNMENT: cat (CAPTION: cat) (CONTRADICTION: dog)";
        assert_eq!(parse_generation(raw), Err(ParseError::MissingKey("MISALIGNMENT TYPE")));
    }

    #[test]
    fn missing_cue() {
        let raw = "CONTRADICTION: a dog\nMISALIGNMENT: not a dog (CAPTION: cat)\nMISALIGNMENT TYPE: Object/Noun";
        assert_eq!(parse_generation(raw), Err(ParseError::MissingCue("CONTRADICTION")));
    }

    #[test]
    fn unknown_type() {
        let raw = "CONTRADICTION: a\nMISALIGNMENT: b (CAPTION: c) (CONTRADICTION: d)\nMISALIGNMENT TYPE: Color";
        assert_eq!(parse_generation(raw), Err(ParseError::UnknownType("Color".into())));
    }

    #[test]
    fn keys_are_case_sensitive() {
        let raw = "contradiction: a\nMISALIGNMENT: b (CAPTION: c) (CONTRADICTION: d)\nMISALIGNMENT TYPE: Relation";
        assert_eq!(parse_generation(raw), Err(ParseError::MissingKey("CONTRADICTION")));
    }

    fn phrase() -> impl Strategy<Value = String> {
        prop::collection::vec("[A-Za-z0-9,.'-]{1,8}", 1..7).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(
            c in phrase(), f in phrase(), cc in phrase(), kc in phrase(), t in 0usize..4,
        ) {
            let ty = MisalignmentType::ALL[t];
            let raw = render_generation(&c, &f, &cc, &kc, ty);
            let r = parse_generation(&raw).unwrap();
            prop_assert_eq!(r.contradiction_caption, c);
            prop_assert_eq!(r.feedback, f);
            prop_assert_eq!(r.caption_cue, cc);
            prop_assert_eq!(r.contradiction_cue, kc);
            prop_assert_eq!(r.misalignment_type, ty);
        }
    }
}
