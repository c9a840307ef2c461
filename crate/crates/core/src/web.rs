//! Page fetching and main-content extraction for web findings.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::FetchError;

pub const USER_AGENT: &str = concat!("fallacy-probe/", env!("CARGO_PKG_VERSION"));
pub const FETCH_TIMEOUT: Duration = Duration::from_secs(10);
pub const MAX_PAGE_BYTES: usize = 2 * 1024 * 1024;

#[async_trait]
pub trait PageFetcher: Send + Sync {
    /// Readable main-content text of the page at `url`.
    async fn fetch_main_text(&self, url: &str) -> Result<String, FetchError>;
}

pub struct HttpFetcher {
    client: reqwest::Client,
    max_bytes: usize,
    robots: Mutex<HashMap<String, RobotsRules>>,
}

impl HttpFetcher {
    pub fn new() -> Self {
        Self::with_limits(FETCH_TIMEOUT, MAX_PAGE_BYTES)
    }

    pub fn with_limits(timeout: Duration, max_bytes: usize) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .user_agent(USER_AGENT)
            .build()
            .unwrap_or_else(|_| reqwest::Client::new());
        Self {
            client,
            max_bytes,
            robots: Mutex::new(HashMap::new()),
        }
    }

    async fn allowed(&self, url: &Url) -> bool {
        let origin = url.origin().ascii_serialization();
        if let Some(rules) = self.robots.lock().unwrap().get(&origin) {
            return rules.allows(url.path());
        }
        let rules = match self.client.get(format!("{origin}/robots.txt")).send().await {
            Ok(resp) if resp.status().is_success() => match resp.text().await {
                Ok(body) => RobotsRules::parse(&body, "fallacy-probe"),
                Err(_) => RobotsRules::default(),
            },
            _ => RobotsRules::default(),
        };
        let ok = rules.allows(url.path());
        self.robots.lock().unwrap().insert(origin, rules);
        ok
    }
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::new()
    }
}

#[async_trait]
impl PageFetcher for HttpFetcher {
    async fn fetch_main_text(&self, url: &str) -> Result<String, FetchError> {
        let parsed = Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(FetchError::InvalidUrl(url.to_string()));
        }
        if !self.allowed(&parsed).await {
            return Err(FetchError::RobotsDisallowed);
        }
        let mut resp = self
            .client
            .get(parsed)
            .send()
            .await
            .map_err(|e| FetchError::Network(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(FetchError::Status(resp.status().as_u16()));
        }
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_ascii_lowercase();
        let is_html = content_type.contains("text/html") || content_type.contains("xhtml");
        if !is_html && !content_type.starts_with("text/plain") {
            return Err(FetchError::UnsupportedType(content_type));
        }
        if resp.content_length().is_some_and(|n| n as usize > self.max_bytes) {
            return Err(FetchError::TooLarge(self.max_bytes));
        }
        let mut body = Vec::new();
        while let Some(chunk) = resp
            .chunk()
            .await
            .map_err(|e| FetchError::Network(e.to_string()))?
        {
            body.extend_from_slice(&chunk);
            if body.len() > self.max_bytes {
                return Err(FetchError::TooLarge(self.max_bytes));
            }
        }
        let raw = String::from_utf8_lossy(&body);
        let text = if is_html {
            extract_main_text(&raw)
        } else {
            raw.split("\n\n")
                .map(crate::text::collapse_whitespace)
                .filter(|p| !p.is_empty())
                .collect::<Vec<_>>()
                .join("\n\n")
        };
        if text.trim().is_empty() {
            return Err(FetchError::Empty);
        }
        Ok(text)
    }
}

/// Pages served from memory, keyed by URL; for offline runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixturePages {
    pub pages: HashMap<String, String>,
}

impl FixturePages {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[async_trait]
impl PageFetcher for FixturePages {
    async fn fetch_main_text(&self, url: &str) -> Result<String, FetchError> {
        Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
        let html = self.pages.get(url).ok_or(FetchError::Status(404))?;
        let text = extract_main_text(html);
        if text.is_empty() {
            Err(FetchError::Empty)
        } else {
            Ok(text)
        }
    }
}

// --- robots.txt --------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    /// (allow, path prefix)
    rules: Vec<(bool, String)>,
}

impl RobotsRules {
    /// Rules from the group naming `agent`, or from `*` if none does.
    pub fn parse(body: &str, agent: &str) -> Self {
        let agent = agent.to_ascii_lowercase();
        let mut specific = Vec::new();
        let mut wildcard = Vec::new();
        let mut group_agents: Vec<String> = Vec::new();
        let mut in_rules = false;
        for line in body.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if in_rules {
                        group_agents.clear();
                        in_rules = false;
                    }
                    group_agents.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_rules = true;
                    if value.is_empty() {
                        continue;
                    }
                    let rule = (key == "allow", value.to_string());
                    if group_agents.iter().any(|a| agent.starts_with(a.as_str()) && a != "*") {
                        specific.push(rule.clone());
                    }
                    if group_agents.iter().any(|a| a == "*") {
                        wildcard.push(rule);
                    }
                }
                _ => {}
            }
        }
        Self {
            rules: if specific.is_empty() { wildcard } else { specific },
        }
    }

    /// Longest matching prefix decides; ties go to allow.
    pub fn allows(&self, path: &str) -> bool {
        let mut best: Option<(usize, bool)> = None;
        for (allow, prefix) in &self.rules {
            let prefix = prefix.trim_end_matches('*');
            if path.starts_with(prefix) {
                let len = prefix.len();
                best = match best {
                    Some((l, a)) if l > len || (l == len && a) => Some((l, a)),
                    _ => Some((len, *allow)),
                };
            }
        }
        best.is_none_or(|(_, allow)| allow)
    }
}

// --- HTML main-content extraction ------------------------------------------

const SKIP_TAGS: &[&str] = &[
    "script", "style", "noscript", "template", "svg", "nav", "header", "footer", "aside", "form",
    "button", "select", "iframe", "head", "figure",
];
const TEXT_BLOCKS: &[&str] = &[
    "p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "blockquote", "pre", "td", "dd",
];

enum Token<'a> {
    Open(String),
    Close(String),
    Text(&'a str),
}

fn tokenize(html: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut rest = html;
    while !rest.is_empty() {
        match rest.find('<') {
            None => {
                out.push(Token::Text(rest));
                break;
            }
            Some(i) => {
                if i > 0 {
                    out.push(Token::Text(&rest[..i]));
                }
                rest = &rest[i..];
                if rest.starts_with("<!--") {
                    rest = rest.find("-->").map_or("", |e| &rest[e + 3..]);
                    continue;
                }
                let Some(end) = rest.find('>') else {
                    break;
                };
                let tag = &rest[1..end];
                rest = &rest[end + 1..];
                let (closing, tag) = match tag.strip_prefix('/') {
                    Some(t) => (true, t),
                    None => (false, tag),
                };
                let name: String = tag
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase();
                if name.is_empty() {
                    continue;
                }
                if closing {
                    out.push(Token::Close(name));
                } else {
                    let self_closing = tag.ends_with('/');
                    // raw-text elements: jump to their end tag
                    if matches!(name.as_str(), "script" | "style") && !self_closing {
                        let close = format!("</{name}");
                        let lower = rest.to_ascii_lowercase();
                        rest = lower
                            .find(&close)
                            .and_then(|p| rest[p..].find('>').map(|q| &rest[p + q + 1..]))
                            .unwrap_or("");
                        continue;
                    }
                    out.push(Token::Open(name.clone()));
                    if self_closing || matches!(name.as_str(), "br" | "img" | "hr" | "meta" | "link" | "input") {
                        out.push(Token::Close(name));
                    }
                }
            }
        }
    }
    out
}

pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let Some(end) = rest[..rest.len().min(12)].find(';') else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let entity = &rest[1..end];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            "mdash" => Some('—'),
            "ndash" => Some('–'),
            "hellip" => Some('…'),
            "rsquo" => Some('’'),
            "lsquo" => Some('‘'),
            "rdquo" => Some('”'),
            "ldquo" => Some('“'),
            e if e.starts_with("#x") || e.starts_with("#X") => {
                u32::from_str_radix(&e[2..], 16).ok().and_then(char::from_u32)
            }
            e if e.starts_with('#') => e[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Paragraph text of the page's main content, paragraphs separated by a
/// blank line. Navigation, headers, footers, scripts and forms are
/// dropped. When an `<article>` or `<main>` element exists only its content
/// is used. Pages without paragraph-level elements fall back to all
/// visible text.
pub fn extract_main_text(html: &str) -> String {
    let tokens = tokenize(html);
    let region: &[Token] = ["article", "main"]
        .iter()
        .find_map(|want| {
            let start = tokens
                .iter()
                .position(|t| matches!(t, Token::Open(n) if n == want))?;
            let mut depth = 0usize;
            for (i, t) in tokens.iter().enumerate().skip(start) {
                match t {
                    Token::Open(n) if n == want => depth += 1,
                    Token::Close(n) if n == want => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&tokens[start + 1..i]);
                        }
                    }
                    _ => {}
                }
            }
            Some(&tokens[start + 1..])
        })
        .unwrap_or(&tokens);

    let paragraphs = collect(region, true);
    let paragraphs = if paragraphs.is_empty() {
        collect(region, false)
    } else {
        paragraphs
    };
    paragraphs.join("\n\n")
}

fn collect(tokens: &[Token], blocks_only: bool) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip_depth = 0usize;
    let mut block_depth = 0usize;
    let mut current = String::new();
    let flush = |current: &mut String, out: &mut Vec<String>| {
        let p = crate::text::collapse_whitespace(&decode_entities(current));
        if !p.is_empty() {
            out.push(p);
        }
        current.clear();
    };
    for t in tokens {
        match t {
            Token::Open(n) if SKIP_TAGS.contains(&n.as_str()) => skip_depth += 1,
            Token::Close(n) if SKIP_TAGS.contains(&n.as_str()) => {
                skip_depth = skip_depth.saturating_sub(1)
            }
            _ if skip_depth > 0 => {}
            Token::Open(n) if TEXT_BLOCKS.contains(&n.as_str()) => {
                if block_depth == 0 {
                    flush(&mut current, &mut out);
                }
                block_depth += 1;
            }
            Token::Close(n) if TEXT_BLOCKS.contains(&n.as_str()) => {
                block_depth = block_depth.saturating_sub(1);
                if block_depth == 0 {
                    flush(&mut current, &mut out);
                }
            }
            Token::Open(n) | Token::Close(n) if n == "br" || n == "div" => {
                if !blocks_only {
                    flush(&mut current, &mut out);
                } else {
                    current.push(' ');
                }
            }
            Token::Text(s) => {
                if !blocks_only || block_depth > 0 {
                    current.push_str(s);
                }
            }
            _ => current.push(' '),
        }
    }
    flush(&mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ARTICLE: &str = r#"<!doctype html>
<html><head><title>T</title><style>p { color: red }</style></head>
<body>
<header><nav><a href="/">Home</a> <a href="/about">About</a></nav></header>
<div class="menu">Subscribe now</div>
<article>
  <h1>Do vaccines cause autism?</h1>
  <p>Large cohort studies found <b>no link</b> between vaccination &amp; autism.</p>
  <script>track("view")</script>
  <p>The 1998 paper claiming a link was retracted.</p>
  <aside>Related: 10 tips</aside>
</article>
<footer>&copy; 2024 Example</footer>
</body></html>"#;

    #[test]
    fn article_body_paragraphs_only() {
        assert_eq!(
            extract_main_text(ARTICLE),
            "Do vaccines cause autism?\n\nLarge cohort studies found no link between vaccination & autism.\n\nThe 1998 paper claiming a link was retracted."
        );
    }

    #[test]
    fn pages_without_paragraphs_fall_back_to_text() {
        let html = "<html><body><div>First line</div><div>Second &#x27;line&#39;</div></body></html>";
        assert_eq!(extract_main_text(html), "First line\n\nSecond 'line'");
    }

    #[test]
    fn entities() {
        assert_eq!(decode_entities("a &lt;b&gt; &amp c &#8212; &unknown;"), "a <b> &amp c — &unknown;");
    }

    #[test]
    fn robots_rules() {
        let body = "User-agent: *\nDisallow: /private\nAllow: /private/ok\n\nUser-agent: other\nDisallow: /";
        let rules = RobotsRules::parse(body, "fallacy-probe");
        assert!(rules.allows("/"));
        assert!(!rules.allows("/private/x"));
        assert!(rules.allows("/private/ok/page"));

        let body = "User-agent: fallacy-probe\nDisallow: /\n\nUser-agent: *\nDisallow:";
        assert!(!RobotsRules::parse(body, "fallacy-probe").allows("/a"));
        assert!(RobotsRules::parse("", "fallacy-probe").allows("/a"));
    }
}
