//! Web findings for a query: search, fetch the top pages, extract the
//! relevant parts of each, and summarize them.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::ProbeError;
use crate::gateway::LlmGateway;
use crate::parser::{parse_extracts, parse_summary, ExtractSet, SummaryResult};
use crate::prompt::{render_extraction, render_summary};
use crate::web::PageFetcher;

pub const MAX_SOURCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

#[async_trait]
pub trait SearchProvider: Send + Sync {
    /// Ranked hits for `query`, at most `limit`.
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, ProbeError>;
}

/// Canned results keyed by exact query text.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureSearch {
    pub results: HashMap<String, Vec<SearchHit>>,
}

impl FixtureSearch {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[async_trait]
impl SearchProvider for FixtureSearch {
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, ProbeError> {
        Ok(self
            .results
            .get(query.trim())
            .map(|hits| hits.iter().take(limit).cloned().collect())
            .unwrap_or_default())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WebSearchConfig {
    /// Search API endpoint answering `GET ?q=...&num=...` with
    /// `{"items": [{"title", "link", "snippet"}]}`.
    pub endpoint: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Extra query parameters, e.g. a search-engine id.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

pub struct WebSearch {
    client: reqwest::Client,
    config: WebSearchConfig,
    api_key: Option<String>,
}

impl WebSearch {
    pub fn new(config: WebSearchConfig) -> Result<Self, ProbeError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ProbeError::Upstream(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Url::parse(&config.endpoint).map_err(|e| ProbeError::Upstream(e.to_string()))?;
        Ok(Self {
            client: reqwest::Client::builder()
                .user_agent(crate::web::USER_AGENT)
                .timeout(crate::web::FETCH_TIMEOUT)
                .build()
                .map_err(|e| ProbeError::Upstream(e.to_string()))?,
            config,
            api_key,
        })
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    items: Vec<SearchItem>,
}

#[derive(Deserialize)]
struct SearchItem {
    #[serde(default)]
    title: String,
    link: String,
    #[serde(default)]
    snippet: String,
}

#[async_trait]
impl SearchProvider for WebSearch {
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, ProbeError> {
        let mut url = Url::parse(&self.config.endpoint).map_err(|e| ProbeError::Upstream(e.to_string()))?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("q", query).append_pair("num", &limit.to_string());
            if let Some(key) = &self.api_key {
                q.append_pair("key", key);
            }
            for (k, v) in &self.config.params {
                q.append_pair(k, v);
            }
        }
        let resp = self
            .client
            .get(url)
            .send()
            .await
            .map_err(|e| ProbeError::Upstream(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ProbeError::Upstream(format!("search returned {}", resp.status())));
        }
        let body: SearchResponse = resp
            .json()
            .await
            .map_err(|e| ProbeError::Upstream(format!("invalid search response: {e}")))?;
        Ok(body
            .items
            .into_iter()
            .filter(|i| Url::parse(&i.link).is_ok())
            .take(limit)
            .map(|i| SearchHit {
                title: i.title,
                url: i.link,
                snippet: i.snippet,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingSource {
    pub hit: SearchHit,
    pub extracts: ExtractSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebFindings {
    pub query: String,
    pub sources: Vec<FindingSource>,
    /// `None` when the summary completion could not be parsed.
    pub summary: Option<SummaryResult>,
    /// URLs of `sources`, in search-rank order.
    pub references: Vec<String>,
    /// Empty extract lists added so the summary prompt receives three.
    pub padded_slots: usize,
}

#[derive(Clone)]
pub struct ProbePipeline {
    search: Arc<dyn SearchProvider>,
    fetcher: Arc<dyn PageFetcher>,
    gateway: LlmGateway,
}

impl ProbePipeline {
    pub fn new(
        search: Arc<dyn SearchProvider>,
        fetcher: Arc<dyn PageFetcher>,
        gateway: LlmGateway,
    ) -> Self {
        Self {
            search,
            fetcher,
            gateway,
        }
    }

    pub async fn run_findings(&self, query: &str) -> Result<WebFindings, ProbeError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(ProbeError::EmptyQuery);
        }
        let mut hits = self.search.search(query, MAX_SOURCES).await?;
        hits.retain(|h| Url::parse(&h.url).is_ok());
        hits.truncate(MAX_SOURCES);
        if hits.is_empty() {
            return Err(ProbeError::NoFindings);
        }

        let pages = join_all(hits.iter().map(|h| self.fetcher.fetch_main_text(&h.url))).await;
        let extracted = join_all(
            hits.iter()
                .zip(pages)
                .map(|(hit, page)| self.extract_source(hit, page, query)),
        )
        .await;
        let mut sources = Vec::new();
        for r in extracted {
            sources.extend(r?);
        }
        if sources.is_empty() {
            return Err(ProbeError::NoFindings);
        }

        let mut lists: Vec<Vec<String>> = sources.iter().map(|s| s.extracts.extracts.clone()).collect();
        if lists.iter().all(|l| l.is_empty()) {
            return Err(ProbeError::NoFindings);
        }
        let padded_slots = MAX_SOURCES - lists.len();
        lists.resize(MAX_SOURCES, Vec::new());
        let prompt = render_summary(&lists, query)?;
        let raw = self.gateway.complete_prompt(prompt).await?.raw_text;
        let summary = match parse_summary(&raw) {
            Ok(s) => Some(s),
            Err(e) => {
                tracing::warn!(error = %e, "summary completion unparseable");
                None
            }
        };
        Ok(WebFindings {
            query: query.to_string(),
            references: sources.iter().map(|s| s.hit.url.clone()).collect(),
            sources,
            summary,
            padded_slots,
        })
    }

    /// `Ok(None)` when the page failed to fetch or its extracts failed to
    /// parse; gateway errors propagate.
    async fn extract_source(
        &self,
        hit: &SearchHit,
        page: Result<String, crate::error::FetchError>,
        query: &str,
    ) -> Result<Option<FindingSource>, ProbeError> {
        let text = match page {
            Ok(t) => t,
            Err(e) => {
                tracing::info!(url = %hit.url, error = %e, "skipping source");
                return Ok(None);
            }
        };
        let prompt = render_extraction(&text, query)?;
        let raw = self.gateway.complete_prompt(prompt).await?.raw_text;
        match parse_extracts(&raw) {
            Ok(extracts) => Ok(Some(FindingSource {
                hit: hit.clone(),
                extracts,
            })),
            Err(e) => {
                tracing::info!(url = %hit.url, error = %e, "skipping source");
                Ok(None)
            }
        }
    }
}
