//! Persistence for analyzed pages, per-highlight discussions, votes and
//! the interaction log.
//!
//! State lives in memory behind a lock and, when the store is opened on a
//! directory, is mirrored to `pages.json` (rewritten atomically after each
//! change) and `events.jsonl` (append-only).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::StoreError;
use crate::highlight::{anchor, merge, Highlight, Origin};
use crate::parser::EnrichmentResult;

/// Canonical form of a page URL: parsed, fragment removed. Scheme and host
/// are lowercased by the parser.
pub fn canonical_page_key(raw: &str) -> Option<String> {
    let mut url = url::Url::parse(raw.trim()).ok()?;
    if !matches!(url.scheme(), "http" | "https" | "file") {
        return None;
    }
    url.set_fragment(None);
    Some(url.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub id: String,
    pub highlight_id: String,
    pub author: String,
    pub body: String,
    pub votes: i64,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteDirection {
    Up,
    Down,
}

impl VoteDirection {
    fn weight(self) -> i64 {
        match self {
            VoteDirection::Up => 1,
            VoteDirection::Down => -1,
        }
    }
}

/// Voter identity: self-declared username plus the client's session id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Voter {
    pub username: String,
    pub session: String,
}

impl Voter {
    fn key(&self) -> String {
        format!("{}\u{1f}{}", self.username, self.session)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionKind {
    SummaryChart,
    AiHighlight,
    UserHighlight,
    FoodForThought,
    DiscussionSpace,
    SuggestedQueries,
    WebFindings,
    OpenReference,
    WriteOwnQuery,
    OpenQuery,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 10] = [
        InteractionKind::SummaryChart,
        InteractionKind::AiHighlight,
        InteractionKind::UserHighlight,
        InteractionKind::FoodForThought,
        InteractionKind::DiscussionSpace,
        InteractionKind::SuggestedQueries,
        InteractionKind::WebFindings,
        InteractionKind::OpenReference,
        InteractionKind::WriteOwnQuery,
        InteractionKind::OpenQuery,
    ];
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for InteractionKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InteractionKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| StoreError::MalformedKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub session: String,
    pub kind: InteractionKind,
    #[serde(default)]
    pub payload: String,
    pub at: DateTime<Utc>,
}

impl InteractionEvent {
    /// Builds an event from an untyped kind name, rejecting unknown kinds.
    pub fn parse(session: &str, kind: &str, payload: &str) -> Result<Self, StoreError> {
        Ok(Self {
            session: session.to_string(),
            kind: kind.parse()?,
            payload: payload.to_string(),
            at: Utc::now(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub page_key: String,
    pub text: String,
    /// Live highlights in document order.
    pub highlights: Vec<Highlight>,
    /// Highlights whose anchor vanished but that still carry messages.
    #[serde(default)]
    pub archived: Vec<Highlight>,
    /// Enrichment history per highlight id; the last entry is current.
    #[serde(default)]
    pub enrichments: BTreeMap<String, Vec<EnrichmentResult>>,
    #[serde(default)]
    pub messages: BTreeMap<String, Vec<ChatMessage>>,
    /// message id -> voter key -> direction
    #[serde(default)]
    pub votes: BTreeMap<String, BTreeMap<String, VoteDirection>>,
}

impl PageRecord {
    fn new(page_key: &str, text: &str) -> Self {
        Self {
            page_key: page_key.to_string(),
            text: text.to_string(),
            highlights: Vec::new(),
            archived: Vec::new(),
            enrichments: BTreeMap::new(),
            messages: BTreeMap::new(),
            votes: BTreeMap::new(),
        }
    }

    pub fn current_enrichment(&self, highlight_id: &str) -> Option<&EnrichmentResult> {
        self.enrichments.get(highlight_id).and_then(|h| h.last())
    }

    fn push_enrichment(&mut self, highlight_id: &str, enrichment: EnrichmentResult) {
        let history = self.enrichments.entry(highlight_id.to_string()).or_default();
        if history.last() != Some(&enrichment) {
            history.push(enrichment);
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct State {
    pages: BTreeMap<String, PageRecord>,
    next_message: u64,
    #[serde(skip)]
    highlight_page: HashMap<String, String>,
    #[serde(skip)]
    message_page: HashMap<String, (String, String)>,
}

impl State {
    fn reindex(&mut self) {
        self.highlight_page.clear();
        self.message_page.clear();
        for (key, page) in &self.pages {
            for h in page.highlights.iter().chain(&page.archived) {
                self.highlight_page.insert(h.id.clone(), key.clone());
            }
            for (hid, msgs) in &page.messages {
                for m in msgs {
                    self.message_page
                        .insert(m.id.clone(), (key.clone(), hid.clone()));
                }
            }
        }
    }
}

/// A highlight with the context needed to regenerate its enrichment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighlightContext {
    pub page_key: String,
    pub text: String,
    pub highlight: Highlight,
    pub enrichment: Option<EnrichmentResult>,
}

pub struct DiscussionStore {
    state: RwLock<State>,
    events: Mutex<Vec<InteractionEvent>>,
    dir: Option<PathBuf>,
}

impl DiscussionStore {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State::default()),
            events: Mutex::new(Vec::new()),
            dir: None,
        }
    }

    /// Opens (or creates) a store rooted at `dir`.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let pages_path = dir.join("pages.json");
        let mut state: State = if pages_path.exists() {
            serde_json::from_reader(BufReader::new(File::open(&pages_path)?))?
        } else {
            State::default()
        };
        state.reindex();
        let mut events = Vec::new();
        let events_path = dir.join("events.jsonl");
        if events_path.exists() {
            for line in BufReader::new(File::open(&events_path)?).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    events.push(serde_json::from_str(&line)?);
                }
            }
        }
        Ok(Self {
            state: RwLock::new(state),
            events: Mutex::new(events),
            dir: Some(dir.to_path_buf()),
        })
    }

    fn persist(&self, state: &State) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tmp = dir.join("pages.json.tmp");
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, state)?;
            f.sync_all()?;
        }
        fs::rename(tmp, dir.join("pages.json"))?;
        Ok(())
    }

    /// Stores a fresh analysis of `page_key`.
    ///
    /// AI highlights are replaced by `ai`. Existing user highlights are
    /// re-anchored in `text`; those whose part no longer occurs are
    /// archived, as are replaced AI highlights that carry messages.
    pub fn save_page_analysis(
        &self,
        page_key: &str,
        text: &str,
        ai: Vec<(Highlight, Option<EnrichmentResult>)>,
    ) -> Result<PageRecord, StoreError> {
        let mut state = self.state.write().unwrap();
        let mut page = state
            .pages
            .remove(page_key)
            .unwrap_or_else(|| PageRecord::new(page_key, text));
        page.text = text.to_string();

        let mut users = Vec::new();
        let mut archived = std::mem::take(&mut page.archived);
        let new_ids: Vec<&str> = ai.iter().map(|(h, _)| h.id.as_str()).collect();
        for h in std::mem::take(&mut page.highlights) {
            match h.origin {
                Origin::User => match anchor(&h.part, text) {
                    Ok(span) => users.push(Highlight { span, ..h }),
                    Err(_) => archived.push(h),
                },
                Origin::Ai => {
                    let has_messages = page.messages.get(&h.id).is_some_and(|m| !m.is_empty());
                    if !new_ids.contains(&h.id.as_str()) && has_messages {
                        archived.push(h);
                    }
                }
            }
        }
        let mut ai_highlights = Vec::with_capacity(ai.len());
        for (h, enrichment) in ai {
            if let Some(e) = enrichment {
                page.push_enrichment(&h.id, e);
            }
            ai_highlights.push(h);
        }
        page.highlights = merge(ai_highlights, users);
        archived.retain(|a| !page.highlights.iter().any(|h| h.id == a.id));
        page.archived = archived;
        let live: Vec<String> = page
            .highlights
            .iter()
            .chain(&page.archived)
            .map(|h| h.id.clone())
            .collect();
        page.enrichments.retain(|id, _| live.contains(id));

        let record = page.clone();
        state.pages.insert(page_key.to_string(), page);
        state.reindex();
        self.persist(&state)?;
        Ok(record)
    }

    /// Adds a user highlight to a page, creating the page if needed.
    pub fn add_user_highlight(
        &self,
        page_key: &str,
        text: &str,
        highlight: Highlight,
        enrichment: Option<EnrichmentResult>,
    ) -> Result<Highlight, StoreError> {
        let mut state = self.state.write().unwrap();
        let page = state
            .pages
            .entry(page_key.to_string())
            .or_insert_with(|| PageRecord::new(page_key, text));
        if !page.highlights.iter().any(|h| h.id == highlight.id) {
            let (ai, mut users): (Vec<_>, Vec<_>) = std::mem::take(&mut page.highlights)
                .into_iter()
                .partition(|h| h.origin == Origin::Ai);
            users.push(highlight.clone());
            page.highlights = merge(ai, users);
        }
        if let Some(e) = enrichment {
            page.push_enrichment(&highlight.id, e);
        }
        state
            .highlight_page
            .insert(highlight.id.clone(), page_key.to_string());
        self.persist(&state)?;
        Ok(highlight)
    }

    pub fn page(&self, page_key: &str) -> Option<PageRecord> {
        self.state.read().unwrap().pages.get(page_key).cloned()
    }

    pub fn highlight(&self, highlight_id: &str) -> Result<HighlightContext, StoreError> {
        let state = self.state.read().unwrap();
        let page = state
            .highlight_page
            .get(highlight_id)
            .and_then(|k| state.pages.get(k))
            .ok_or_else(|| StoreError::UnknownHighlight(highlight_id.to_string()))?;
        let highlight = page
            .highlights
            .iter()
            .chain(&page.archived)
            .find(|h| h.id == highlight_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownHighlight(highlight_id.to_string()))?;
        Ok(HighlightContext {
            page_key: page.page_key.clone(),
            text: page.text.clone(),
            enrichment: page.current_enrichment(highlight_id).cloned(),
            highlight,
        })
    }

    pub fn enrichment_history(&self, highlight_id: &str) -> Result<Vec<EnrichmentResult>, StoreError> {
        let ctx = self.highlight(highlight_id)?;
        let state = self.state.read().unwrap();
        Ok(state.pages[&ctx.page_key]
            .enrichments
            .get(highlight_id)
            .cloned()
            .unwrap_or_default())
    }

    /// Appends a newly generated enrichment; it becomes current.
    pub fn push_enrichment(
        &self,
        highlight_id: &str,
        enrichment: EnrichmentResult,
    ) -> Result<(), StoreError> {
        let mut state = self.state.write().unwrap();
        let key = state
            .highlight_page
            .get(highlight_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownHighlight(highlight_id.to_string()))?;
        let page = state.pages.get_mut(&key).expect("index points at a page");
        page.enrichments
            .entry(highlight_id.to_string())
            .or_default()
            .push(enrichment);
        self.persist(&state)
    }

    pub fn post_message(
        &self,
        highlight_id: &str,
        author: &str,
        body: &str,
    ) -> Result<ChatMessage, StoreError> {
        if body.trim().is_empty() {
            return Err(StoreError::EmptyBody);
        }
        let mut state = self.state.write().unwrap();
        let key = state
            .highlight_page
            .get(highlight_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownHighlight(highlight_id.to_string()))?;
        state.next_message += 1;
        let message = ChatMessage {
            id: format!("m{}", state.next_message),
            highlight_id: highlight_id.to_string(),
            author: author.trim().to_string(),
            body: body.to_string(),
            votes: 0,
            created_at: Utc::now(),
        };
        state
            .message_page
            .insert(message.id.clone(), (key.clone(), highlight_id.to_string()));
        state
            .pages
            .get_mut(&key)
            .expect("index points at a page")
            .messages
            .entry(highlight_id.to_string())
            .or_default()
            .push(message.clone());
        self.persist(&state)?;
        Ok(message)
    }

    pub fn messages(&self, highlight_id: &str) -> Result<Vec<ChatMessage>, StoreError> {
        let state = self.state.read().unwrap();
        let key = state
            .highlight_page
            .get(highlight_id)
            .ok_or_else(|| StoreError::UnknownHighlight(highlight_id.to_string()))?;
        Ok(state.pages[key]
            .messages
            .get(highlight_id)
            .cloned()
            .unwrap_or_default())
    }

    /// Records `voter`'s vote and returns the message's new tally. One vote
    /// per voter: repeating a direction is a no-op, the opposite direction
    /// replaces the earlier vote.
    pub fn vote(
        &self,
        message_id: &str,
        direction: VoteDirection,
        voter: &Voter,
    ) -> Result<i64, StoreError> {
        let mut state = self.state.write().unwrap();
        let (key, hid) = state
            .message_page
            .get(message_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownMessage(message_id.to_string()))?;
        let page = state.pages.get_mut(&key).expect("index points at a page");
        let ballots = page.votes.entry(message_id.to_string()).or_default();
        ballots.insert(voter.key(), direction);
        let tally: i64 = ballots.values().map(|d| d.weight()).sum();
        if let Some(m) = page
            .messages
            .get_mut(&hid)
            .and_then(|ms| ms.iter_mut().find(|m| m.id == message_id))
        {
            m.votes = tally;
        }
        self.persist(&state)?;
        Ok(tally)
    }

    pub fn log_event(&self, event: InteractionEvent) -> Result<(), StoreError> {
        let mut events = self.events.lock().unwrap();
        if let Some(dir) = &self.dir {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("events.jsonl"))?;
            writeln!(f, "{}", serde_json::to_string(&event)?)?;
        }
        events.push(event);
        Ok(())
    }

    /// Event counts per kind, optionally for one session.
    pub fn event_counts(&self, session: Option<&str>) -> BTreeMap<InteractionKind, usize> {
        let events = self.events.lock().unwrap();
        let mut counts = BTreeMap::new();
        for e in events.iter().filter(|e| session.is_none_or(|s| e.session == s)) {
            *counts.entry(e.kind).or_insert(0) += 1;
        }
        counts
    }

    pub fn events(&self) -> Vec<InteractionEvent> {
        self.events.lock().unwrap().clone()
    }

    /// Writes the event log as line-delimited JSON.
    pub fn export_events(&self, mut out: impl Write) -> Result<(), StoreError> {
        for e in self.events.lock().unwrap().iter() {
            writeln!(out, "{}", serde_json::to_string(e)?)?;
        }
        Ok(())
    }
}

/// Tallies per kind from an exported event log.
pub fn counts_from_log(log: impl BufRead) -> Result<BTreeMap<InteractionKind, usize>, StoreError> {
    let mut counts = BTreeMap::new();
    for line in log.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: InteractionEvent = serde_json::from_str(&line)?;
        *counts.entry(e.kind).or_insert(0) += 1;
    }
    Ok(counts)
}
