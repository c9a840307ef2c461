//! Client for text-completion endpoints.
//!
//! [`LlmGateway`] wraps a pluggable [`CompletionEndpoint`] with a deadline,
//! retry with exponential backoff for transport failures, and a bound on
//! in-flight requests. Two HTTP adapters ship (chat-message and raw
//! completion, both in the OpenAI-compatible wire shape) plus a
//! fixture-backed [`FakeEndpoint`] for offline runs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::error::GatewayError;
use crate::prompt::{PromptTask, RenderedPrompt};

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: connection failures, 429, 5xx.
    Transient(String),
    Auth(String),
    /// A response arrived but cannot be used; not retried.
    Rejected(String),
}

#[async_trait]
pub trait CompletionEndpoint: Send + Sync {
    async fn call(&self, prompt: &RenderedPrompt) -> Result<String, TransportError>;

    fn model_id(&self) -> &str;
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub prompt: RenderedPrompt,
    pub deadline: Duration,
}

impl CompletionRequest {
    pub fn new(prompt: RenderedPrompt) -> Self {
        Self {
            prompt,
            deadline: DEFAULT_DEADLINE,
        }
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub raw_text: String,
    pub latency: Duration,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            base_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Clone)]
pub struct LlmGateway {
    endpoint: Arc<dyn CompletionEndpoint>,
    policy: RetryPolicy,
    in_flight: Arc<Semaphore>,
    deadline: Duration,
}

impl LlmGateway {
    pub fn new(endpoint: Arc<dyn CompletionEndpoint>) -> Self {
        Self::with_policy(endpoint, RetryPolicy::default(), DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_policy(
        endpoint: Arc<dyn CompletionEndpoint>,
        policy: RetryPolicy,
        max_in_flight: usize,
    ) -> Self {
        Self {
            endpoint,
            policy: RetryPolicy {
                max_attempts: policy.max_attempts.max(1),
                ..policy
            },
            in_flight: Arc::new(Semaphore::new(max_in_flight.max(1))),
            deadline: DEFAULT_DEADLINE,
        }
    }

    /// Deadline applied by [`LlmGateway::complete_prompt`].
    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn model_id(&self) -> &str {
        self.endpoint.model_id()
    }

    /// `complete` with the gateway's default deadline.
    pub async fn complete_prompt(
        &self,
        prompt: RenderedPrompt,
    ) -> Result<CompletionResult, GatewayError> {
        self.complete(CompletionRequest::new(prompt).with_deadline(self.deadline))
            .await
    }

    pub async fn complete(&self, req: CompletionRequest) -> Result<CompletionResult, GatewayError> {
        if req.deadline.is_zero() {
            return Err(GatewayError::Config("deadline must be positive".into()));
        }
        let started = Instant::now();
        match tokio::time::timeout(req.deadline, self.attempt_loop(&req.prompt)).await {
            Ok(Ok((raw_text, attempts))) => Ok(CompletionResult {
                raw_text,
                latency: started.elapsed(),
                attempts,
            }),
            Ok(Err(e)) => Err(e),
            Err(_) => Err(GatewayError::Deadline(req.deadline)),
        }
    }

    async fn attempt_loop(&self, prompt: &RenderedPrompt) -> Result<(String, u32), GatewayError> {
        let _permit = self
            .in_flight
            .acquire()
            .await
            .map_err(|_| GatewayError::Config("gateway closed".into()))?;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.endpoint.call(prompt).await {
                Ok(text) => return Ok((text, attempts)),
                Err(TransportError::Auth(msg)) => return Err(GatewayError::Config(msg)),
                Err(TransportError::Rejected(last)) => {
                    return Err(GatewayError::Unavailable { attempts, last })
                }
                Err(TransportError::Transient(last)) => {
                    if attempts >= self.policy.max_attempts {
                        return Err(GatewayError::Unavailable { attempts, last });
                    }
                    tracing::warn!(attempt = attempts, error = %last, "completion failed; retrying");
                    let backoff = self.policy.base_backoff * 2u32.saturating_pow(attempts - 1);
                    tokio::time::sleep(backoff).await;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    /// `POST {url}` with `messages: [system, user]`; reads `choices[0].message.content`.
    Chat,
    /// `POST {url}` with the flat prompt body; reads `choices[0].text`.
    Completion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub adapter: AdapterKind,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_deadline_secs")]
    pub deadline_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}
fn default_deadline_secs() -> u64 {
    DEFAULT_DEADLINE.as_secs()
}
fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

pub struct HttpEndpoint {
    client: reqwest::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    adapter: AdapterKind,
}

impl HttpEndpoint {
    pub fn new(config: &EndpointConfig) -> Result<Self, GatewayError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        url::Url::parse(&config.url)
            .map_err(|e| GatewayError::Config(format!("invalid endpoint url: {e}")))?;
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: config.url.clone(),
            model: config.model.clone(),
            api_key,
            adapter: config.adapter,
        })
    }

    fn payload(&self, prompt: &RenderedPrompt) -> Value {
        match self.adapter {
            AdapterKind::Chat => {
                let chat = prompt.chat();
                json!({
                    "model": self.model,
                    "messages": [
                        {"role": "system", "content": chat.system},
                        {"role": "user", "content": chat.user},
                    ],
                    "temperature": prompt.params.temperature,
                    "max_tokens": prompt.params.max_new_tokens,
                })
            }
            AdapterKind::Completion => json!({
                "model": self.model,
                "prompt": prompt.body,
                "temperature": prompt.params.temperature,
                "max_tokens": prompt.params.max_new_tokens,
            }),
        }
    }
}

#[async_trait]
impl CompletionEndpoint for HttpEndpoint {
    async fn call(&self, prompt: &RenderedPrompt) -> Result<String, TransportError> {
        let mut req = self.client.post(&self.url).json(&self.payload(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(TransportError::Auth(format!("endpoint returned {status}")));
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(TransportError::Transient(format!("endpoint returned {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Rejected(format!("endpoint returned {status}")));
        }
        let body: Value = resp
            .json()
            .await
            .map_err(|e| TransportError::Rejected(format!("invalid response body: {e}")))?;
        let choice = &body["choices"][0];
        let text = match self.adapter {
            AdapterKind::Chat => &choice["message"]["content"],
            AdapterKind::Completion => &choice["text"],
        };
        text.as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Rejected("response has no completion text".into()))
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

/// Hex SHA-256 of a prompt body; the key fake fixtures are stored under.
pub fn prompt_hash(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// On-disk form of a [`FakeEndpoint`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FakeFixture {
    #[serde(default = "default_fake_model")]
    pub model: String,
    /// Completions keyed by [`prompt_hash`] of the prompt body.
    #[serde(default)]
    pub responses: HashMap<String, String>,
    /// Completion per task for prompts without a keyed entry.
    #[serde(default)]
    pub defaults: HashMap<PromptTask, String>,
}

fn default_fake_model() -> String {
    "fake".to_string()
}

/// Deterministic endpoint answering from a fixture. Prompts with no keyed
/// response fall back to the task default; with neither, the call is
/// rejected.
pub struct FakeEndpoint {
    fixture: FakeFixture,
    calls: AtomicUsize,
    recorded: Mutex<Vec<RenderedPrompt>>,
}

impl FakeEndpoint {
    pub fn new(fixture: FakeFixture) -> Self {
        Self {
            fixture,
            calls: AtomicUsize::new(0),
            recorded: Mutex::new(Vec::new()),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let fixture = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(fixture))
    }

    pub fn with_response(mut self, prompt_body: &str, completion: impl Into<String>) -> Self {
        self.fixture
            .responses
            .insert(prompt_hash(prompt_body), completion.into());
        self
    }

    pub fn with_default(mut self, task: PromptTask, completion: impl Into<String>) -> Self {
        self.fixture.defaults.insert(task, completion.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn recorded(&self) -> Vec<RenderedPrompt> {
        self.recorded.lock().unwrap().clone()
    }
}

#[async_trait]
impl CompletionEndpoint for FakeEndpoint {
    async fn call(&self, prompt: &RenderedPrompt) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.recorded.lock().unwrap().push(prompt.clone());
        self.fixture
            .responses
            .get(&prompt_hash(&prompt.body))
            .or_else(|| self.fixture.defaults.get(&prompt.task))
            .cloned()
            .ok_or_else(|| TransportError::Rejected(format!("no fixture for {:?} prompt", prompt.task)))
    }

    fn model_id(&self) -> &str {
        &self.fixture.model
    }
}
