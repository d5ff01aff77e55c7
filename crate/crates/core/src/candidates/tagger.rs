//! Part-of-speech tagging for captions.
//!
//! The built-in [`LexiconTagger`] looks words up in shipped word lists and
//! falls back to suffix rules, then to `noun`. Spatial-relation phrases such
//! as "in front of" are matched greedily as single tokens.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Adjective,
    Verb,
    Preposition,
    Other,
}

/// A token with byte offsets into the caption it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub text: String,
    pub pos: Pos,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaggerError {
    #[error("caption is empty")]
    EmptyCaption,
    #[error("tagger backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("tagger returned invalid tokens: {0}")]
    InvalidTokens(String),
}

pub trait TaggerBackend: Send + Sync {
    fn tag(&self, caption: &str) -> Result<Vec<TaggedToken>, TaggerError>;
}

impl<T: TaggerBackend + ?Sized> TaggerBackend for &T {
    fn tag(&self, caption: &str) -> Result<Vec<TaggedToken>, TaggerError> {
        (**self).tag(caption)
    }
}

impl<T: TaggerBackend + ?Sized> TaggerBackend for std::sync::Arc<T> {
    fn tag(&self, caption: &str) -> Result<Vec<TaggedToken>, TaggerError> {
        (**self).tag(caption)
    }
}

/// Tags a caption; rejects empty input before touching the backend.
pub fn tag_caption(caption: &str, tagger: &dyn TaggerBackend) -> Result<Vec<TaggedToken>, TaggerError> {
    if caption.trim().is_empty() {
        return Err(TaggerError::EmptyCaption);
    }
    tagger.tag(caption)
}

/// Word lists backing the built-in tagger.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub relations: Vec<Vec<String>>,
    pub prepositions: HashSet<String>,
    pub function_words: HashSet<String>,
    pub nouns: HashSet<String>,
    pub verbs: HashSet<String>,
    pub adjectives: HashSet<String>,
    pub stopwords: HashSet<String>,
}

const RELATIONS: &str = include_str!("../../lexicon/relations.txt");
const PREPOSITIONS: &str = include_str!("../../lexicon/prepositions.txt");
const FUNCTION_WORDS: &str = include_str!("../../lexicon/function_words.txt");
const NOUNS: &str = include_str!("../../lexicon/nouns.txt");
const VERBS: &str = include_str!("../../lexicon/verbs.txt");
const ADJECTIVES: &str = include_str!("../../lexicon/adjectives.txt");
const STOPWORDS: &str = include_str!("../../lexicon/stopwords.txt");

fn entries(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
}

impl Lexicon {
    pub fn builtin() -> Self {
        Self::from_texts([RELATIONS, PREPOSITIONS, FUNCTION_WORDS, NOUNS, VERBS, ADJECTIVES, STOPWORDS])
    }

    /// Loads the same seven files (`relations.txt`, `prepositions.txt`, ...) from a directory.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let names = [
            "relations.txt",
            "prepositions.txt",
            "function_words.txt",
            "nouns.txt",
            "verbs.txt",
            "adjectives.txt",
            "stopwords.txt",
        ];
        let texts = names
            .iter()
            .map(|n| fs::read_to_string(dir.join(n)))
            .collect::<io::Result<Vec<_>>>()?;
        let arr: [&str; 7] = std::array::from_fn(|i| texts[i].as_str());
        Ok(Self::from_texts(arr))
    }

    fn from_texts(t: [&str; 7]) -> Self {
        let mut relations: Vec<Vec<String>> = entries(t[0])
            .map(|e| e.split_whitespace().map(str::to_string).collect())
            .collect();
        // Longest phrases first so "in front of" wins over shorter matches.
        relations.sort_by_key(|r| std::cmp::Reverse(r.len()));
        Self {
            relations,
            prepositions: entries(t[1]).collect(),
            function_words: entries(t[2]).collect(),
            nouns: entries(t[3]).collect(),
            verbs: entries(t[4]).collect(),
            adjectives: entries(t[5]).collect(),
            stopwords: entries(t[6]).collect(),
        }
    }

    /// Whether a (possibly multi-word) token is in the relation lexicon.
    pub fn is_relation(&self, text: &str) -> bool {
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        self.relations.contains(&words)
    }

    pub fn is_stopword(&self, text: &str) -> bool {
        self.stopwords.contains(&text.to_lowercase())
    }

    fn tag_word(&self, lower: &str) -> Pos {
        if self.function_words.contains(lower) {
            Pos::Other
        } else if self.prepositions.contains(lower) {
            Pos::Preposition
        } else if self.nouns.contains(lower) {
            Pos::Noun
        } else if self.verbs.contains(lower) {
            Pos::Verb
        } else if self.adjectives.contains(lower) {
            Pos::Adjective
        } else {
            suffix_rule(lower)
        }
    }
}

fn suffix_rule(w: &str) -> Pos {
    let n = w.chars().count();
    if w.chars().all(|c| c.is_ascii_digit()) {
        return Pos::Other;
    }
    if n > 4 && w.ends_with("ing") {
        return Pos::Verb;
    }
    if n > 3 && w.ends_with("ed") {
        return Pos::Verb;
    }
    if n > 4 && w.ends_with("ly") {
        return Pos::Other;
    }
    const ADJ: [&str; 7] = ["ous", "ful", "ish", "less", "able", "ible", "ive"];
    if n > 4 && ADJ.iter().any(|s| w.ends_with(s)) {
        return Pos::Adjective;
    }
    Pos::Noun
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    word: bool,
}

/// Splits into words (alphanumerics with inner `'`/`-`) and single-character
/// punctuation tokens. Together the spans cover all non-whitespace bytes.
fn segment(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                let joins = (cj == '\'' || cj == '-')
                    && chars.get(j + 1).is_some_and(|(_, n)| n.is_alphanumeric());
                if cj.is_alphanumeric() || joins {
                    j += 1;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(text.len(), |(b, _)| *b);
            out.push(Span { start, end, word: true });
            i = j;
        } else {
            out.push(Span { start, end: start + c.len_utf8(), word: false });
            i += 1;
        }
    }
    out
}

/// Lexicon + suffix-rule tagger.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: Lexicon,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self { lexicon: Lexicon::builtin() }
    }
}

impl LexiconTagger {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn relation_at(&self, text: &str, spans: &[Span], i: usize) -> Option<usize> {
        'outer: for phrase in &self.lexicon.relations {
            if i + phrase.len() > spans.len() {
                continue;
            }
            for (k, w) in phrase.iter().enumerate() {
                let s = spans[i + k];
                if !s.word || text[s.start..s.end].to_lowercase() != *w {
                    continue 'outer;
                }
            }
            return Some(phrase.len());
        }
        None
    }
}

impl TaggerBackend for LexiconTagger {
    fn tag(&self, caption: &str) -> Result<Vec<TaggedToken>, TaggerError> {
        if caption.trim().is_empty() {
            return Err(TaggerError::EmptyCaption);
        }
        let spans = segment(caption);
        let mut tokens = Vec::with_capacity(spans.len());
        let mut i = 0;
        while i < spans.len() {
            let s = spans[i];
            if !s.word {
                tokens.push(TaggedToken {
                    text: caption[s.start..s.end].to_string(),
                    pos: Pos::Other,
                    char_start: s.start,
                    char_end: s.end,
                });
                i += 1;
                continue;
            }
            if let Some(len) = self.relation_at(caption, &spans, i) {
                let end = spans[i + len - 1].end;
                tokens.push(TaggedToken {
                    text: caption[s.start..end].to_string(),
                    pos: Pos::Preposition,
                    char_start: s.start,
                    char_end: end,
                });
                i += len;
                continue;
            }
            let text = &caption[s.start..s.end];
            tokens.push(TaggedToken {
                text: text.to_string(),
                pos: self.lexicon.tag_word(&text.to_lowercase()),
                char_start: s.start,
                char_end: s.end,
            });
            i += 1;
        }
        Ok(tokens)
    }
}
