//! Anchoring of detected parts in source text, merging of AI and user
//! highlights, and the per-fallacy summary.
//!
//! Offsets are Unicode scalar (char) positions into the source text.
//! Matching collapses whitespace runs on both sides, so a part quoted with
//! different spacing or line breaks still anchors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::AnchorError;
use crate::parser::DetectedFallacy;
use crate::taxonomy::{card_for, FallacyLabel, USER_HIGHLIGHT_COLOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The spanned slice of `source`, by char offsets.
    pub fn slice<'a>(&self, source: &'a str) -> &'a str {
        let start = char_to_byte(source, self.start);
        let end = char_to_byte(source, self.end).max(start);
        &source[start..end]
    }
}

fn char_to_byte(s: &str, n: usize) -> usize {
    s.char_indices().nth(n).map(|(i, _)| i).unwrap_or(s.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Ai,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub id: String,
    pub origin: Origin,
    pub span: Span,
    pub part: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<FallacyLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explain_short: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explain_long: Option<String>,
    pub color_token: String,
}

fn highlight_id(page_key: &str, origin: Origin, span: Span, tag: &str) -> String {
    let mut h = Sha256::new();
    h.update(page_key.as_bytes());
    h.update([0]);
    h.update(match origin {
        Origin::Ai => b"ai".as_slice(),
        Origin::User => b"user".as_slice(),
    });
    h.update([0]);
    h.update(format!("{}:{}", span.start, span.end).as_bytes());
    h.update([0]);
    h.update(tag.as_bytes());
    format!("h{}", &hex::encode(h.finalize())[..16])
}

impl Highlight {
    /// Anchors a detection in `source`. Out-of-set and `Nothing` labels
    /// never become highlights.
    pub fn from_detection(
        page_key: &str,
        source: &str,
        det: &DetectedFallacy,
    ) -> Result<Self, AnchorError> {
        let card = card_for(det.label).map_err(|_| AnchorError::NotFound(det.part.clone()))?;
        let span = anchor(&det.part, source)?;
        Ok(Self {
            id: highlight_id(page_key, Origin::Ai, span, card.english_name),
            origin: Origin::Ai,
            span,
            part: span.slice(source).to_string(),
            label: Some(det.label),
            reason: None,
            explain_short: Some(det.explain_short.clone()),
            explain_long: Some(det.explain_long.clone()),
            color_token: card.color_token.to_string(),
        })
    }

    pub fn user(
        page_key: &str,
        source: &str,
        part: &str,
        reason: &str,
    ) -> Result<Self, AnchorError> {
        let span = anchor(part, source)?;
        let reason = reason.trim().to_string();
        Ok(Self {
            id: highlight_id(page_key, Origin::User, span, &reason),
            origin: Origin::User,
            span,
            part: span.slice(source).to_string(),
            label: None,
            reason: Some(reason),
            explain_short: None,
            explain_long: None,
            color_token: USER_HIGHLIGHT_COLOR.to_string(),
        })
    }
}

/// Whitespace-collapsed chars with the source char offset of each.
fn normalize_indexed(s: &str, fold_case: bool) -> (Vec<char>, Vec<usize>) {
    let mut chars = Vec::with_capacity(s.len());
    let mut map = Vec::with_capacity(s.len());
    let mut prev_space = false;
    for (i, c) in s.chars().enumerate() {
        if c.is_whitespace() {
            if !prev_space {
                chars.push(' ');
                map.push(i);
            }
            prev_space = true;
        } else {
            chars.push(if fold_case { fold(c) } else { c });
            map.push(i);
            prev_space = false;
        }
    }
    (chars, map)
}

// one-to-one lowercase so offsets stay aligned
fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn find_chars(hay: &[char], needle: &[char]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Span of the first occurrence of `part` in `source` under whitespace
/// collapsing; case-sensitive first, then case-insensitive.
pub fn anchor(part: &str, source: &str) -> Result<Span, AnchorError> {
    let trimmed = part.trim();
    if trimmed.is_empty() {
        return Err(AnchorError::EmptyPart);
    }
    for fold_case in [false, true] {
        let (hay, map) = normalize_indexed(source, fold_case);
        let (needle, _) = normalize_indexed(trimmed, fold_case);
        if let Some(pos) = find_chars(&hay, &needle) {
            let start = map[pos];
            let end = map[pos + needle.len() - 1] + 1;
            if find_chars(&hay[pos + 1..], &needle).is_some() {
                tracing::debug!(part = trimmed, "part occurs more than once; using the first");
            }
            return Ok(Span { start, end });
        }
    }
    Err(AnchorError::NotFound(trimmed.to_string()))
}

/// Combines AI and user highlights in document order. AI highlights that
/// overlap an earlier AI highlight are dropped; user highlights are kept
/// unconditionally.
pub fn merge(ai: Vec<Highlight>, user: Vec<Highlight>) -> Vec<Highlight> {
    let mut ai = ai;
    ai.sort_by_key(|h| h.span.start);
    let mut kept: Vec<Highlight> = Vec::with_capacity(ai.len() + user.len());
    for h in ai {
        let clash = kept.iter().any(|k| k.span.overlaps(&h.span));
        if clash {
            tracing::debug!(part = %h.part, "dropping overlapping AI highlight");
        } else {
            kept.push(h);
        }
    }
    let mut users: Vec<Highlight> = Vec::with_capacity(user.len());
    for h in user {
        if !users.iter().any(|u| u.id == h.id) {
            users.push(h);
        }
    }
    kept.extend(users);
    kept.sort_by(|a, b| {
        (a.span.start, a.span.end, a.origin).cmp(&(b.span.start, b.span.end, b.origin))
    });
    kept
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallacySummary {
    pub counts: BTreeMap<FallacyLabel, usize>,
    pub total: usize,
}

/// Per-fallacy counts over the AI highlights.
pub fn summarize(highlights: &[Highlight]) -> FallacySummary {
    let mut counts: BTreeMap<FallacyLabel, usize> =
        FallacyLabel::FALLACIES.iter().map(|&l| (l, 0)).collect();
    for h in highlights.iter().filter(|h| h.origin == Origin::Ai) {
        if let Some(label) = h.label {
            *counts.entry(label).or_default() += 1;
        }
    }
    let total = counts.values().sum();
    FallacySummary { counts, total }
}
