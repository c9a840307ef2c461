use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser};
use fallacy_core::gateway::{
    AdapterKind, CompletionEndpoint, EndpointConfig, FakeEndpoint, HttpEndpoint, LlmGateway, RetryPolicy,
    DEFAULT_MAX_ATTEMPTS, DEFAULT_MAX_IN_FLIGHT,
};
use fallacy_core::probe::{FixtureSearch, ProbePipeline, SearchProvider, WebSearch, WebSearchConfig};
use fallacy_core::store::DiscussionStore;
use fallacy_core::web::{FixturePages, HttpFetcher, PageFetcher};

use crate::AppState;

#[derive(Debug, Parser)]
#[command(name = "fallacy-server", version, about = "Serve fallacy highlights and discussion spaces over HTTP")]
pub struct ServerArgs {
    #[arg(long, default_value = "127.0.0.1:8080", env = "FALLACY_BIND")]
    pub bind: SocketAddr,

    #[command(flatten)]
    pub llm: LlmArgs,

    #[command(flatten)]
    pub search: SearchArgs,

    /// Directory for the discussion store; omit to keep state in memory.
    #[arg(long, env = "FALLACY_STORE")]
    pub store: Option<PathBuf>,

    /// Run fully offline against the bundled demo page and scripted model.
    #[arg(long, conflicts_with_all = ["llm_url", "llm_fixture", "search_url", "search_fixture", "pages_fixture"])]
    pub demo: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    /// OpenAI-compatible completion endpoint URL.
    #[arg(long, env = "FALLACY_LLM_URL", required_unless_present_any = ["llm_fixture", "demo"])]
    pub llm_url: Option<String>,

    #[arg(long, env = "FALLACY_LLM_MODEL", default_value = "meta-llama/Meta-Llama-3-8B-Instruct")]
    pub llm_model: String,

    #[arg(long, value_enum, default_value = "chat")]
    pub llm_adapter: Adapter,

    /// Environment variable holding the endpoint's bearer token.
    #[arg(long)]
    pub llm_api_key_env: Option<String>,

    /// Serve completions from a fixture file instead of a live endpoint.
    #[arg(long, env = "FALLACY_LLM_FIXTURE", conflicts_with = "llm_url")]
    pub llm_fixture: Option<PathBuf>,

    #[arg(long, default_value_t = 60)]
    pub llm_deadline_secs: u64,

    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    pub llm_max_attempts: u32,

    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    pub llm_max_in_flight: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Adapter {
    Chat,
    Completion,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Search API answering `?q=&num=` with `{"items": [{title, link, snippet}]}`.
    #[arg(long, env = "FALLACY_SEARCH_URL")]
    pub search_url: Option<String>,

    #[arg(long)]
    pub search_api_key_env: Option<String>,

    /// Extra search parameter as key=value; repeatable.
    #[arg(long = "search-param", value_parser = parse_pair)]
    pub search_params: Vec<(String, String)>,

    /// Canned search results keyed by query.
    #[arg(long, env = "FALLACY_SEARCH_FIXTURE", conflicts_with = "search_url")]
    pub search_fixture: Option<PathBuf>,

    /// Canned pages keyed by URL, used instead of fetching.
    #[arg(long, env = "FALLACY_PAGES_FIXTURE")]
    pub pages_fixture: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

impl LlmArgs {
    pub fn gateway(&self) -> Result<LlmGateway> {
        let endpoint: Arc<dyn CompletionEndpoint> = match (&self.llm_fixture, &self.llm_url) {
            (Some(path), _) => Arc::new(
                FakeEndpoint::load(path).with_context(|| format!("loading LLM fixture {}", path.display()))?,
            ),
            (None, Some(url)) => Arc::new(HttpEndpoint::new(&EndpointConfig {
                url: url.clone(),
                model: self.llm_model.clone(),
                adapter: match self.llm_adapter {
                    Adapter::Chat => AdapterKind::Chat,
                    Adapter::Completion => AdapterKind::Completion,
                },
                api_key_env: self.llm_api_key_env.clone(),
                max_attempts: self.llm_max_attempts,
                deadline_secs: self.llm_deadline_secs,
                max_in_flight: self.llm_max_in_flight,
            })?),
            (None, None) => bail!("either --llm-url or --llm-fixture is required"),
        };
        let policy = RetryPolicy {
            max_attempts: self.llm_max_attempts,
            ..RetryPolicy::default()
        };
        Ok(LlmGateway::with_policy(endpoint, policy, self.llm_max_in_flight)
            .with_deadline(Duration::from_secs(self.llm_deadline_secs)))
    }
}

impl SearchArgs {
    pub fn provider(&self) -> Result<Arc<dyn SearchProvider>> {
        Ok(match (&self.search_fixture, &self.search_url) {
            (Some(path), _) => Arc::new(
                FixtureSearch::load(path).with_context(|| format!("loading search fixture {}", path.display()))?,
            ),
            (None, Some(url)) => Arc::new(WebSearch::new(WebSearchConfig {
                endpoint: url.clone(),
                api_key_env: self.search_api_key_env.clone(),
                params: self.search_params.iter().cloned().collect(),
            })?),
            (None, None) => {
                tracing::warn!("no search provider configured; web findings will be empty");
                Arc::new(FixtureSearch::default())
            }
        })
    }

    pub fn fetcher(&self) -> Result<Arc<dyn PageFetcher>> {
        Ok(match &self.pages_fixture {
            Some(path) => Arc::new(
                FixturePages::load(path).with_context(|| format!("loading pages fixture {}", path.display()))?,
            ),
            None => Arc::new(HttpFetcher::new()),
        })
    }
}

impl ServerArgs {
    pub fn state(&self) -> Result<AppState> {
        let store = match &self.store {
            Some(dir) => DiscussionStore::open(dir).with_context(|| format!("opening store {}", dir.display()))?,
            None => DiscussionStore::in_memory(),
        };
        if self.demo {
            return Ok(crate::demo::state(store));
        }
        let gateway = self.llm.gateway()?;
        let probe = ProbePipeline::new(self.search.provider()?, self.search.fetcher()?, gateway.clone());
        Ok(AppState {
            gateway,
            probe,
            store: Arc::new(store),
        })
    }
}
