//! Misalignment candidate extraction and sampling, plus positive-caption
//! selection.

mod tagger;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::MisalignmentType;

pub use tagger::{tag_caption, Lexicon, LexiconTagger, Pos, TaggedToken, TaggerBackend, TaggerError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CandidateError {
    #[error("no misalignment candidates in any category")]
    NoCandidates,
    #[error("caption list is empty")]
    EmptyList,
}

/// One word (or relation phrase) of the caption that may be altered.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MisalignmentCandidate {
    pub category: MisalignmentType,
    pub span: (usize, usize),
    pub surface: String,
}

/// Candidates by category; all four keys are always present.
pub type CandidateMap = BTreeMap<MisalignmentType, Vec<MisalignmentCandidate>>;

pub fn category_for(pos: Pos, text: &str, lexicon: &Lexicon) -> Option<MisalignmentType> {
    match pos {
        Pos::Noun => Some(MisalignmentType::Object),
        Pos::Adjective => Some(MisalignmentType::Attribute),
        Pos::Verb => Some(MisalignmentType::Action),
        Pos::Preposition if lexicon.is_relation(text) => Some(MisalignmentType::Relation),
        _ => None,
    }
}

/// Groups tokens into candidates. Stop-list words never become candidates.
pub fn extract_candidates(caption: &str, tokens: &[TaggedToken], lexicon: &Lexicon) -> CandidateMap {
    let mut out: CandidateMap = MisalignmentType::ALL.iter().map(|t| (*t, Vec::new())).collect();
    for tok in tokens {
        if tok.char_end > caption.len() || caption.get(tok.char_start..tok.char_end).is_none() {
            continue;
        }
        if lexicon.is_stopword(&tok.text) {
            continue;
        }
        if let Some(category) = category_for(tok.pos, &tok.text, lexicon) {
            out.entry(category).or_default().push(MisalignmentCandidate {
                category,
                span: (tok.char_start, tok.char_end),
                surface: tok.text.clone(),
            });
        }
    }
    out
}

/// Draws a category uniformly among the non-empty ones, then a distinct
/// surface form uniformly within it. A repeated surface binds to its first
/// occurrence.
pub fn sample_candidate(cands: &CandidateMap, rng_seed: u64) -> Result<MisalignmentCandidate, CandidateError> {
    let non_empty: Vec<&Vec<MisalignmentCandidate>> = MisalignmentType::ALL
        .iter()
        .filter_map(|t| cands.get(t))
        .filter(|v| !v.is_empty())
        .collect();
    if non_empty.is_empty() {
        return Err(CandidateError::NoCandidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let list = non_empty[rng.gen_range(0..non_empty.len())];
    let mut seen = Vec::<String>::new();
    let mut distinct = Vec::new();
    for c in list {
        let key = c.surface.to_lowercase();
        if !seen.contains(&key) {
            seen.push(key);
            distinct.push(c);
        }
    }
    Ok(distinct[rng.gen_range(0..distinct.len())].clone())
}

/// Index of the longest caption by character count, first on ties.
pub fn select_positive_caption_index<S: AsRef<str>>(captions: &[S]) -> Result<usize, CandidateError> {
    let mut best: Option<(usize, usize)> = None;
    for (i, c) in captions.iter().enumerate() {
        let n = c.as_ref().chars().count();
        if best.map_or(true, |(_, m)| n > m) {
            best = Some((i, n));
        }
    }
    best.map(|(i, _)| i).ok_or(CandidateError::EmptyList)
}

pub fn select_positive_caption<S: AsRef<str>>(captions: &[S]) -> Result<&str, CandidateError> {
    select_positive_caption_index(captions).map(|i| captions[i].as_ref())
}

/// Per-item seed derived from a run seed, an item id and a draw index.
pub fn derive_seed(base: u64, key: &str, draw: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(base ^ h) ^ draw)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
