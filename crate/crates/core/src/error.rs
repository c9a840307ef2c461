use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("the Nothing sentinel has no fallacy card")]
    NoCard,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("highlighted part does not occur in the text")]
    AnchorMismatch,
    #[error("wrong extract arity: {0}")]
    Arity(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("completion deadline of {0:?} exceeded")]
    Deadline(std::time::Duration),
    #[error("endpoint unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("endpoint configuration error: {0}")]
    Config(String),
}

/// Raised when a completion cannot be turned into a typed result.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable {what} completion")]
pub struct ParseError {
    pub what: &'static str,
    pub raw: String,
}

impl ParseError {
    pub(crate) fn new(what: &'static str, raw: &str) -> Self {
        Self {
            what,
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnchorError {
    #[error("cannot anchor an empty part")]
    EmptyPart,
    #[error("part not found in source: {0:?}")]
    NotFound(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("invalid url {0}")]
    InvalidUrl(String),
    #[error("network failure: {0}")]
    Network(String),
    #[error("http status {0}")]
    Status(u16),
    #[error("unsupported content type {0:?}")]
    UnsupportedType(String),
    #[error("page exceeds {0} bytes")]
    TooLarge(usize),
    #[error("fetching disallowed by robots.txt")]
    RobotsDisallowed,
    #[error("no readable text on page")]
    Empty,
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("no usable web sources for query")]
    NoFindings,
    #[error("search provider failed: {0}")]
    Upstream(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown highlight {0}")]
    UnknownHighlight(String),
    #[error("unknown message {0}")]
    UnknownMessage(String),
    #[error("message body must not be empty")]
    EmptyBody,
    #[error("unknown interaction kind {0:?}")]
    MalformedKind(String),
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("storage encoding failure: {0}")]
    Encoding(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no results to score")]
    EmptyResults,
    #[error("few-shot instance not present in the filtered set: {0:?}")]
    FewshotNotSubset(String),
    #[error("{failed} of {total} instances failed, above the abort threshold")]
    TooManyFailures { failed: usize, total: usize },
    #[error("invalid dataset record at line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("encoding failure: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
