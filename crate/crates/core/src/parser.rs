//! Typed parsing of model completions.
//!
//! Completions follow the loose "templates" of the prompts rather than
//! strict JSON: the detection template itself omits a comma, list items may
//! be bare words and trailing commas are common. Each parser tries strict
//! JSON first, then a repaired form, then field-wise scanning, and only
//! then reports a [`ParseError`].

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ParseError;
use crate::taxonomy::{parse_label, FallacyLabel};
use crate::text::word_count;

pub const TARGET_QUESTIONS: usize = 8;
pub const TARGET_QUERIES: usize = 3;
pub const MAX_EXTRACTS: usize = crate::prompt::MAX_EXTRACTS;
pub const SUMMARY_MIN_WORDS: usize = 80;
pub const SUMMARY_MAX_WORDS: usize = 150;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedFallacy {
    pub part: String,
    pub label: FallacyLabel,
    pub out_of_set: bool,
    /// The fallacy name exactly as the model wrote it.
    pub raw_label: String,
    pub explain_short: String,
    pub explain_long: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub critical_questions: Vec<String>,
    pub critical_queries: Vec<String>,
    /// How many questions short of the requested eight.
    pub questions_shortfall: usize,
    /// How many queries short of the requested three.
    pub queries_shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisedQueries {
    pub queries: Vec<String>,
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSet {
    pub extracts: Vec<String>,
    /// Set when the model returned more than five extracts and the tail
    /// was dropped.
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryResult {
    pub summary: String,
    pub word_count: usize,
    pub length_conformant: bool,
}

impl SummaryResult {
    pub fn new(summary: String) -> Self {
        let word_count = word_count(&summary);
        Self {
            summary,
            word_count,
            length_conformant: (SUMMARY_MIN_WORDS..=SUMMARY_MAX_WORDS).contains(&word_count),
        }
    }
}

// --- lenient structure helpers -------------------------------------------

fn strip_fences(s: &str) -> &str {
    let s = s.trim();
    let s = s
        .strip_prefix("```json")
        .or_else(|| s.strip_prefix("```"))
        .unwrap_or(s);
    s.strip_suffix("```").unwrap_or(s).trim()
}

/// Top-level `{...}` regions. String-aware first; if that finds nothing
/// (unbalanced quotes in prose) falls back to counting braces only.
fn object_blocks(s: &str) -> Vec<&str> {
    let blocks = scan_blocks(s, true);
    if blocks.is_empty() {
        scan_blocks(s, false)
    } else {
        blocks
    }
}

fn scan_blocks(s: &str, string_aware: bool) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_str = false;
    let mut esc = false;
    for (i, c) in s.char_indices() {
        if in_str {
            if esc {
                esc = false;
            } else if c == '\\' {
                esc = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' if string_aware && depth > 0 => in_str = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push(&s[start..=i]);
                }
            }
            _ => {}
        }
    }
    out
}

static TRAILING_COMMA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r",(\s*[}\]])").unwrap());
static MISSING_COMMA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"("|\]|\})([ \t]*\r?\n\s*)""#).unwrap());

fn repair(s: &str) -> String {
    let s = TRAILING_COMMA.replace_all(s, "$1");
    MISSING_COMMA.replace_all(&s, "$1,$2\"").into_owned()
}

/// Parses `s` as a JSON object, strictly and then after repair.
fn lenient_object(s: &str) -> Option<serde_json::Map<String, Value>> {
    let parse = |t: &str| match serde_json::from_str::<Value>(t) {
        Ok(Value::Object(m)) => Some(m),
        _ => None,
    };
    parse(s).or_else(|| parse(&repair(s)))
}

/// All objects found in a completion, each parsed leniently.
fn objects(raw: &str) -> Vec<(String, Option<serde_json::Map<String, Value>>)> {
    let body = strip_fences(raw);
    object_blocks(body)
        .into_iter()
        .map(|b| (b.to_string(), lenient_object(b)))
        .collect()
}

fn decode_json_string(inner: &str) -> String {
    serde_json::from_str::<String>(&format!("\"{inner}\""))
        .unwrap_or_else(|_| inner.replace("\\\"", "\"").replace("\\n", "\n"))
}

/// Byte offset just past `open` in the first `key"?\s*:\s*open` match.
fn value_start(hay: &str, key: &str, open: char) -> Option<usize> {
    let mut from = 0;
    while let Some(pos) = hay[from..].find(key) {
        let at = from + pos + key.len();
        let rest = hay[at..].strip_prefix('"').unwrap_or(&hay[at..]);
        if let Some(after_colon) = rest.trim_start().strip_prefix(':') {
            let value = after_colon.trim_start();
            if value.starts_with(open) {
                return Some(hay.len() - value.len() + open.len_utf8());
            }
        }
        from += pos + 1;
    }
    None
}

/// Field-wise scan for `"key": "value"` where `value` may contain
/// unescaped quotes. The value ends at the first quote that is followed by
/// a comma, a closing brace, or a line break.
fn scan_string_field(block: &str, key: &str) -> Option<String> {
    let rest = &block[value_start(block, key, '"')?..];
    let mut end = None;
    let mut esc = false;
    for (i, c) in rest.char_indices() {
        if esc {
            esc = false;
            continue;
        }
        match c {
            '\\' => esc = true,
            '"' => {
                let after = rest[i + 1..].trim_start_matches([' ', '\t']);
                if after.is_empty()
                    || after.starts_with(',')
                    || after.starts_with('}')
                    || after.starts_with('\n')
                    || after.starts_with('\r')
                {
                    end = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    end.map(|e| decode_json_string(&rest[..e]))
}

fn string_field(
    obj: Option<&serde_json::Map<String, Value>>,
    block: &str,
    key: &str,
) -> Option<String> {
    if let Some(v) = obj.and_then(|o| o.get(key)) {
        return match v {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        };
    }
    scan_string_field(block, key)
}

fn value_to_items(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(|i| match i {
                    Value::String(s) => Some(s.clone()),
                    Value::Null => None,
                    other => Some(other.to_string()),
                })
                .collect(),
        ),
        Value::String(s) => Some(vec![s.clone()]),
        _ => None,
    }
}

/// Bracketed list following `key`, with quoted or bare items.
fn scan_list_field(raw: &str, key: &str) -> Option<Vec<String>> {
    let rest = &raw[value_start(raw, key, '[')?..];

    let mut items = Vec::new();
    let mut in_str = false;
    let mut esc = false;
    let mut cur = String::new();
    let mut close = None;
    for (i, c) in rest.char_indices() {
        if in_str {
            if esc {
                esc = false;
                cur.push(c);
            } else if c == '\\' {
                esc = true;
                cur.push(c);
            } else if c == '"' {
                in_str = false;
                items.push(decode_json_string(&cur));
                cur.clear();
            } else {
                cur.push(c);
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            ']' => {
                close = Some(i);
                break;
            }
            _ => {}
        }
    }
    // unterminated string: keep what was read
    if in_str && !cur.trim().is_empty() {
        items.push(decode_json_string(&cur));
    }
    let inner = &rest[..close.unwrap_or(rest.len())];
    if items.is_empty() && !inner.contains('"') {
        items = inner
            .split([',', '\n'])
            .map(|s| s.trim().to_string())
            .collect();
    }
    Some(items)
}

fn list_field(raw: &str, key: &str) -> Option<Vec<String>> {
    for (block, obj) in objects(raw) {
        if let Some(items) = obj.as_ref().and_then(|o| o.get(key)).and_then(value_to_items) {
            return Some(items);
        }
        if let Some(items) = scan_list_field(&block, key) {
            return Some(items);
        }
    }
    scan_list_field(strip_fences(raw), key)
}

fn clean_items(items: Vec<String>) -> Vec<String> {
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && s != "..." && s != "…")
        .collect()
}

// --- parsers ---------------------------------------------------------------

fn is_nothing(raw: &str) -> bool {
    let t = strip_fences(raw)
        .trim_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '"' | '\'' | '`'));
    t.eq_ignore_ascii_case("nothing")
}

pub fn parse_detection(raw: &str) -> Result<Vec<DetectedFallacy>, ParseError> {
    if is_nothing(raw) {
        return Ok(Vec::new());
    }
    let blocks = objects(raw);
    let mut out: Vec<DetectedFallacy> = Vec::new();
    let mut recognized = false;
    for (block, obj) in &blocks {
        let part = string_field(obj.as_ref(), block, "part");
        let fallacy = string_field(obj.as_ref(), block, "fallacy");
        if part.is_none() && fallacy.is_none() {
            continue;
        }
        recognized = true;
        let part = part.unwrap_or_default().trim().to_string();
        let raw_label = fallacy.unwrap_or_default().trim().to_string();
        if part.is_empty() {
            continue;
        }
        let parsed = parse_label(&raw_label);
        if parsed.label == FallacyLabel::Nothing && !parsed.out_of_set {
            continue;
        }
        let explain_long = string_field(obj.as_ref(), block, "explain_long")
            .unwrap_or_default()
            .trim()
            .to_string();
        let mut explain_short = string_field(obj.as_ref(), block, "explain_short")
            .unwrap_or_default()
            .trim()
            .to_string();
        if explain_short.is_empty() {
            explain_short = if !explain_long.is_empty() {
                explain_long.clone()
            } else if let Ok(card) = crate::taxonomy::card_for(parsed.label) {
                card.definition.to_string()
            } else {
                String::new()
            };
        }
        if out
            .iter()
            .any(|d| d.part == part && d.label == parsed.label)
        {
            continue;
        }
        out.push(DetectedFallacy {
            part,
            label: parsed.label,
            out_of_set: parsed.out_of_set,
            raw_label,
            explain_short,
            explain_long,
        });
    }
    if !recognized {
        return Err(ParseError::new("detection", raw));
    }
    Ok(out)
}

fn capped(items: Vec<String>, target: usize) -> (Vec<String>, usize) {
    let mut items = clean_items(items);
    items.truncate(target);
    let shortfall = target - items.len();
    (items, shortfall)
}

pub fn parse_enrichment(raw: &str) -> Result<EnrichmentResult, ParseError> {
    let questions = list_field(raw, "critical_questions");
    let queries = list_field(raw, "critical_queries");
    let (critical_questions, questions_shortfall) =
        capped(questions.unwrap_or_default(), TARGET_QUESTIONS);
    let (critical_queries, queries_shortfall) = capped(queries.unwrap_or_default(), TARGET_QUERIES);
    if critical_questions.is_empty() && critical_queries.is_empty() {
        return Err(ParseError::new("enrichment", raw));
    }
    Ok(EnrichmentResult {
        critical_questions,
        critical_queries,
        questions_shortfall,
        queries_shortfall,
    })
}

pub fn parse_revised_queries(raw: &str) -> Result<RevisedQueries, ParseError> {
    let (queries, shortfall) =
        capped(list_field(raw, "revised_queries").unwrap_or_default(), TARGET_QUERIES);
    if queries.is_empty() {
        return Err(ParseError::new("revised queries", raw));
    }
    Ok(RevisedQueries { queries, shortfall })
}

pub fn parse_extracts(raw: &str) -> Result<ExtractSet, ParseError> {
    let mut extracts = clean_items(list_field(raw, "extracts").unwrap_or_default());
    if extracts.is_empty() {
        return Err(ParseError::new("extracts", raw));
    }
    let overflow = extracts.len() > MAX_EXTRACTS;
    extracts.truncate(MAX_EXTRACTS);
    Ok(ExtractSet { extracts, overflow })
}

pub fn parse_summary(raw: &str) -> Result<SummaryResult, ParseError> {
    let found = objects(raw)
        .into_iter()
        .find_map(|(block, obj)| string_field(obj.as_ref(), &block, "summary"))
        .or_else(|| scan_string_field(strip_fences(raw), "summary"));
    match found.map(|s| s.trim().to_string()) {
        Some(s) if !s.is_empty() => Ok(SummaryResult::new(s)),
        _ => Err(ParseError::new("summary", raw)),
    }
}

// --- formatting of well-formed completions ---------------------------------

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn quoted_list(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| quoted(s)).collect();
    format!("[{}]", inner.join(", "))
}

/// Writes detections in the detection template's block layout, as a
/// well-behaved model would.
pub fn format_detection(items: &[DetectedFallacy]) -> String {
    if items.is_empty() {
        return "nothing".to_string();
    }
    items
        .iter()
        .map(|d| {
            format!(
                "{{\n  \"part\": {},\n  \"fallacy\": {},\n  \"explain_short\": {},\n  \"explain_long\": {}\n}}",
                quoted(&d.part),
                quoted(&d.raw_label),
                quoted(&d.explain_short),
                quoted(&d.explain_long)
            )
        })
        .collect::<Vec<_>>()
        .join(",\n")
}

pub fn format_enrichment(questions: &[String], queries: &[String]) -> String {
    format!(
        "{{\n  \"critical_questions\":  {},\n  \"critical_queries\": {}\n}}",
        quoted_list(questions),
        quoted_list(queries)
    )
}

pub fn format_revised_queries(queries: &[String]) -> String {
    format!("{{\n  \"revised_queries\":  {},\n}}", quoted_list(queries))
}

pub fn format_extracts(extracts: &[String]) -> String {
    format!("{{\n  \"extracts\":  {},\n}}", quoted_list(extracts))
}

pub fn format_summary(summary: &str) -> String {
    format!("{{\n  \"summary\": {},\n}}", quoted(summary))
}
