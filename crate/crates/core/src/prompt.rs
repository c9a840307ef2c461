//! Rendering of the six prompt templates and their generation parameters.
//!
//! Templates are bundled verbatim under `templates/`, including their
//! Llama-3 header markers and quirks (the detection template's missing
//! comma, the own-query template reusing the "text" marker for the part).
//! Each template is split once into literal segments and slot markers;
//! slots are filled positionally so repeated markers stay unambiguous.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::PromptError;
use crate::text::{contains_normalized, truncate_words};

pub const SYSTEM_ROLE: &str = "You are a critical thinker.";

/// Web page text beyond this many words is dropped before extraction.
pub const EXTRACTION_WORD_LIMIT: usize = 2500;

pub const MAX_EXTRACTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptTask {
    DetectFallacies,
    EnrichAiHighlight,
    ReviseOwnQuery,
    ExtractWebContent,
    SummarizeExtracts,
    EnrichUserHighlight,
}

impl PromptTask {
    pub const ALL: [PromptTask; 6] = [
        PromptTask::DetectFallacies,
        PromptTask::EnrichAiHighlight,
        PromptTask::ReviseOwnQuery,
        PromptTask::ExtractWebContent,
        PromptTask::SummarizeExtracts,
        PromptTask::EnrichUserHighlight,
    ];

    pub fn params(self) -> GenerationParams {
        let (temperature, max_new_tokens) = match self {
            PromptTask::DetectFallacies => (0.0, 512),
            PromptTask::EnrichAiHighlight => (0.7, 512),
            PromptTask::ReviseOwnQuery => (0.7, 256),
            PromptTask::ExtractWebContent => (0.7, 512),
            PromptTask::SummarizeExtracts => (0.7, 256),
            PromptTask::EnrichUserHighlight => (0.7, 512),
        };
        GenerationParams {
            temperature,
            max_new_tokens,
            system_role: SYSTEM_ROLE.to_string(),
        }
    }

    /// The bundled template text, exactly as transcribed.
    pub fn golden(self) -> &'static str {
        match self {
            PromptTask::DetectFallacies => include_str!("../templates/detect_fallacies.txt"),
            PromptTask::EnrichAiHighlight => include_str!("../templates/enrich_ai_highlight.txt"),
            PromptTask::ReviseOwnQuery => include_str!("../templates/revise_own_query.txt"),
            PromptTask::ExtractWebContent => include_str!("../templates/extract_web_content.txt"),
            PromptTask::SummarizeExtracts => include_str!("../templates/summarize_extracts.txt"),
            PromptTask::EnrichUserHighlight => {
                include_str!("../templates/enrich_user_highlight.txt")
            }
        }
    }

    fn slot_count(self) -> usize {
        match self {
            PromptTask::DetectFallacies => 1,
            PromptTask::ExtractWebContent => 2,
            PromptTask::SummarizeExtracts => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_new_tokens: u32,
    pub system_role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub task: PromptTask,
    pub body: String,
    pub params: GenerationParams,
}

/// A rendered prompt split for chat-style endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
}

const SYSTEM_OPEN: &str = "<|start_header_id|>system<|end_header_id|>";
const USER_OPEN: &str = "<|start_header_id|>user<|end_header_id|>";
const EOT: &str = "<|eot_id|>";
const ASSISTANT_TAIL: &str = "<|eot_id|>\n<|start_header_id|>assistant<|end_header_id|>";

impl RenderedPrompt {
    /// Splits the flat body into its system and user turns.
    pub fn chat(&self) -> ChatPrompt {
        let after_system = self
            .body
            .find(SYSTEM_OPEN)
            .map(|i| &self.body[i + SYSTEM_OPEN.len()..])
            .unwrap_or(&self.body);
        let system = after_system
            .find(EOT)
            .map(|i| &after_system[..i])
            .unwrap_or(&self.params.system_role);
        let user_start = self
            .body
            .find(USER_OPEN)
            .map(|i| i + USER_OPEN.len())
            .unwrap_or(0);
        let user_end = self.body.rfind(ASSISTANT_TAIL).unwrap_or(self.body.len());
        ChatPrompt {
            system: system.to_string(),
            user: self.body[user_start..user_end.max(user_start)].to_string(),
        }
    }
}

static MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"--The [a-z ]+ go(?:es)? here--").unwrap());

struct Template {
    literals: Vec<&'static str>,
}

impl Template {
    fn parse(src: &'static str) -> Self {
        let mut literals = Vec::new();
        let mut last = 0;
        for m in MARKER.find_iter(src) {
            literals.push(&src[last..m.start()]);
            last = m.end();
        }
        literals.push(&src[last..]);
        Self { literals }
    }

    fn fill(&self, values: &[&str]) -> String {
        debug_assert_eq!(values.len() + 1, self.literals.len());
        let mut out = String::with_capacity(
            self.literals.iter().map(|l| l.len()).sum::<usize>()
                + values.iter().map(|v| v.len()).sum::<usize>(),
        );
        for (lit, value) in self.literals.iter().zip(values) {
            out.push_str(lit);
            out.push_str(value);
        }
        out.push_str(self.literals.last().unwrap());
        out
    }
}

static TEMPLATES: LazyLock<Vec<Template>> = LazyLock::new(|| {
    PromptTask::ALL
        .iter()
        .map(|t| {
            let tpl = Template::parse(t.golden());
            assert_eq!(tpl.literals.len(), t.slot_count() + 1, "{t:?} slot count");
            tpl
        })
        .collect()
});

fn render(task: PromptTask, values: &[&str]) -> RenderedPrompt {
    let idx = PromptTask::ALL.iter().position(|t| *t == task).unwrap();
    RenderedPrompt {
        task,
        body: TEMPLATES[idx].fill(values),
        params: task.params(),
    }
}

fn require(value: &str, field: &'static str) -> Result<(), PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::EmptyInput(field))
    } else {
        Ok(())
    }
}

fn require_part(text: &str, part: &str) -> Result<(), PromptError> {
    require(text, "text")?;
    require(part, "part")?;
    if contains_normalized(text, part) {
        Ok(())
    } else {
        Err(PromptError::AnchorMismatch)
    }
}

pub fn render_detection(text: &str) -> Result<RenderedPrompt, PromptError> {
    require(text, "text")?;
    Ok(render(PromptTask::DetectFallacies, &[text]))
}

pub fn render_enrichment(
    text: &str,
    part: &str,
    fallacy_name: &str,
) -> Result<RenderedPrompt, PromptError> {
    require_part(text, part)?;
    require(fallacy_name, "fallacy")?;
    Ok(render(PromptTask::EnrichAiHighlight, &[text, part, fallacy_name]))
}

pub fn render_own_query(
    text: &str,
    part: &str,
    search_terms: &str,
) -> Result<RenderedPrompt, PromptError> {
    require(search_terms, "search terms")?;
    Ok(render(PromptTask::ReviseOwnQuery, &[text, part, search_terms]))
}

/// Renders the extraction prompt with `web_text` cut to its first
/// [`EXTRACTION_WORD_LIMIT`] words.
pub fn render_extraction(web_text: &str, query: &str) -> Result<RenderedPrompt, PromptError> {
    require(web_text, "web text")?;
    require(query, "query")?;
    let slotted = truncate_words(web_text, EXTRACTION_WORD_LIMIT);
    Ok(render(PromptTask::ExtractWebContent, &[slotted, query]))
}

/// Renders the summary prompt over exactly three extract lists.
///
/// Lists hold at most [`MAX_EXTRACTS`] items. An empty list is accepted as
/// padding for a source that did not survive fetching, as long as at least
/// one list carries extracts.
pub fn render_summary<S: AsRef<str>>(
    extracts: &[Vec<S>],
    query: &str,
) -> Result<RenderedPrompt, PromptError> {
    if extracts.len() != 3 {
        return Err(PromptError::Arity(format!(
            "expected 3 extract lists, got {}",
            extracts.len()
        )));
    }
    if let Some(list) = extracts.iter().find(|l| l.len() > MAX_EXTRACTS) {
        return Err(PromptError::Arity(format!(
            "extract list has {} items, at most {MAX_EXTRACTS} allowed",
            list.len()
        )));
    }
    if extracts.iter().all(|l| l.is_empty()) {
        return Err(PromptError::Arity("all extract lists are empty".into()));
    }
    require(query, "query")?;
    let lists: Vec<String> = extracts
        .iter()
        .map(|l| {
            let items: Vec<&str> = l.iter().map(|s| s.as_ref()).collect();
            serde_json::to_string(&items).expect("string lists always serialize")
        })
        .collect();
    Ok(render(
        PromptTask::SummarizeExtracts,
        &[&lists[0], &lists[1], &lists[2], query],
    ))
}

pub fn render_user_highlight(
    text: &str,
    part: &str,
    reason: &str,
) -> Result<RenderedPrompt, PromptError> {
    require_part(text, part)?;
    require(reason, "reason")?;
    Ok(render(PromptTask::EnrichUserHighlight, &[text, part, reason]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker_values(task: PromptTask) -> Vec<&'static str> {
        MARKER
            .find_iter(task.golden())
            .map(|m| m.as_str())
            .collect()
    }

    #[test]
    fn sentinel_rendering_reproduces_golden() {
        for task in PromptTask::ALL {
            let values = marker_values(task);
            assert_eq!(values.len(), task.slot_count());
            assert_eq!(render(task, &values).body, task.golden(), "{task:?}");
        }
    }

    #[test]
    fn detection_prompt() {
        let p = render_detection("X").unwrap();
        assert!(p.body.contains("return only one word: nothing"));
        assert!(p.body.ends_with("<|start_header_id|>assistant<|end_header_id|>"));
        assert!(p.body.contains("The text:\n\nX<|eot_id|>"));
        assert_eq!(p.params.temperature, 0.0);
        assert_eq!(p.params.max_new_tokens, 512);
        assert_eq!(p.params.system_role, "You are a critical thinker.");
        assert_eq!(render_detection(""), Err(PromptError::EmptyInput("text")));
        assert_eq!(render_detection(" \n"), Err(PromptError::EmptyInput("text")));
    }

    #[test]
    fn detection_template_carries_five_fallacies() {
        let body = render_detection("X").unwrap().body;
        for name in [
            "questionable cause",
            "ad populum",
            "ad hominem",
            "appeal to emotion",
            "appeal to authority",
        ] {
            assert!(body.contains(&format!("\"fallacy\": \"{name}\"")), "{name}");
        }
        // the response template lacks a comma after explain_short
        assert!(body.contains("in up to 30 words\"\n  \"explain_long\""));
    }

    #[test]
    fn parameter_table() {
        let table = [
            (PromptTask::DetectFallacies, 0.0, 512),
            (PromptTask::EnrichAiHighlight, 0.7, 512),
            (PromptTask::ReviseOwnQuery, 0.7, 256),
            (PromptTask::ExtractWebContent, 0.7, 512),
            (PromptTask::SummarizeExtracts, 0.7, 256),
            (PromptTask::EnrichUserHighlight, 0.7, 512),
        ];
        for (task, temp, tokens) in table {
            let p = task.params();
            assert_eq!((p.temperature, p.max_new_tokens), (temp, tokens), "{task:?}");
            assert_eq!(p.system_role, SYSTEM_ROLE);
        }
    }

    #[test]
    fn enrichment_prompt() {
        let text = "Everyone  agrees, so it must be true.";
        let p = render_enrichment(text, "Everyone agrees", "ad populum").unwrap();
        assert!(p.body.contains("Create a list of 3 distinct search queries"));
        assert!(p.body.contains("Create a list of 8 distinct questions"));
        assert!(p.body.contains("\"fallacy\": \"ad populum\""));
        assert!(render_enrichment(text, text, "ad populum").is_ok());
        assert_eq!(
            render_enrichment(text, "nobody", "ad populum"),
            Err(PromptError::AnchorMismatch)
        );
    }

    #[test]
    fn own_query_prompt() {
        let p = render_own_query("T", "P", "obesity causes").unwrap();
        assert!(p.body.contains("\"text\": \"T\""));
        assert!(p.body.contains("\"part\": \"P\""));
        assert!(p.body.contains("\"search_terms\": \"obesity causes\""));
        assert_eq!(p.params.max_new_tokens, 256);
        assert_eq!(
            render_own_query("T", "P", ""),
            Err(PromptError::EmptyInput("search terms"))
        );
        let p = render_own_query("T", "P", "肥満 の 原因 ☕").unwrap();
        assert!(p.body.contains("肥満 の 原因 ☕"));
    }

    #[test]
    fn extraction_truncates_to_limit() {
        let page: String = (0..3000).map(|i| format!("w{i} ")).collect();
        let p = render_extraction(&page, "q").unwrap();
        let slotted = truncate_words(&page, EXTRACTION_WORD_LIMIT);
        assert_eq!(slotted.split_whitespace().count(), 2500);
        assert!(p.body.contains(&format!("\"text\": \"{slotted}\"")));
        assert!(!p.body.contains("w2500 "));
        assert!(p.body.contains("at least one part and at most five parts"));

        let short = "ten words are here in this little page of text";
        assert!(render_extraction(short, "q").unwrap().body.contains(short));

        let exact: String = (0..2500).map(|i| format!("w{i} ")).collect();
        assert!(render_extraction(&exact, "q").unwrap().body.contains(&exact));

        assert_eq!(render_extraction("", "q"), Err(PromptError::EmptyInput("web text")));
    }

    #[test]
    fn summary_arity() {
        let two = vec!["a".to_string(), "b".to_string()];
        let p = render_summary(&[two.clone(), two.clone(), two.clone()], "q").unwrap();
        assert!(p.body.contains("at least 80 words and at most 150 words"));
        assert!(p.body.contains("1: [\"a\",\"b\"],"));
        assert!(matches!(
            render_summary(&[two.clone(), two.clone()], "q"),
            Err(PromptError::Arity(_))
        ));
        let six: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        assert!(matches!(
            render_summary(&[two.clone(), six, two.clone()], "q"),
            Err(PromptError::Arity(_))
        ));
        let empty: Vec<String> = vec![];
        assert!(render_summary(&[two, empty.clone(), empty.clone()], "q").is_ok());
        assert!(render_summary(&[empty.clone(), empty.clone(), empty], "q").is_err());
    }

    #[test]
    fn user_highlight_prompt() {
        let text = "Vaccines cause autism, says my neighbour.";
        let p = render_user_highlight(text, "Vaccines cause autism", "no source").unwrap();
        assert!(p.body.contains("based on the reason"));
        assert!(p.body.contains("\"reason\": \"no source\""));
        assert_eq!(
            render_user_highlight(text, "Vaccines", ""),
            Err(PromptError::EmptyInput("reason"))
        );
        assert!(render_user_highlight(text, text, "r").is_ok());
    }

    #[test]
    fn chat_split() {
        let p = render_detection("Some text.").unwrap();
        let chat = p.chat();
        assert_eq!(chat.system, SYSTEM_ROLE);
        assert!(chat.user.starts_with("There are five fallacies"));
        assert!(chat.user.ends_with("Some text."));
    }

    #[test]
    fn rendering_is_deterministic_and_fills_every_slot() {
        for task in PromptTask::ALL {
            let values: Vec<String> = (0..task.slot_count()).map(|i| format!("<v{i}>")).collect();
            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
            let a = render(task, &refs);
            let b = render(task, &refs);
            assert_eq!(a, b);
            assert!(!MARKER.is_match(&a.body), "{task:?}");
        }
    }
}
