//! Offline demo wiring: a sample page, scripted completions, canned search
//! results and pages. Used by `--demo` and by the test suites.

use std::collections::HashMap;
use std::sync::Arc;

use fallacy_core::gateway::{FakeEndpoint, FakeFixture, LlmGateway};
use fallacy_core::parser::{
    format_detection, format_enrichment, format_extracts, format_revised_queries, format_summary, DetectedFallacy,
};
use fallacy_core::probe::{FixtureSearch, ProbePipeline, SearchHit};
use fallacy_core::prompt::{render_detection, PromptTask};
use fallacy_core::store::DiscussionStore;
use fallacy_core::web::FixturePages;
use fallacy_core::FallacyLabel;

use crate::AppState;

pub const PAGE_KEY: &str = "https://forum.example.org/t/keto-max-plan";

pub const TEXT: &str = "Everyone in my town already switched to the Keto Max plan, so it must be the healthiest diet there is. \
Dr. Rick, a famous TV chef, says it cures diabetes, and that is good enough for me. \
Anyone who questions it is just a bitter, jealous loser. \
Since the plan became popular, our town's crime rate dropped, which proves the diet calms people down. \
Our grandparents never counted calories either.";

pub const QUERIES: [&str; 3] = [
    "Keto Max plan clinical trial results",
    "does a ketogenic diet cure diabetes",
    "diet popularity and crime rate correlation",
];

pub const REVISED_QUERIES: [&str; 3] = [
    "Keto Max plan long-term health evidence",
    "ketogenic diet type 2 diabetes remission studies",
    "celebrity endorsements of diets accuracy",
];

pub const QUESTIONS: [&str; 8] = [
    "What evidence beyond popularity supports this claim?",
    "Would the claim still hold if most people disagreed?",
    "Who benefits if readers accept this without checking?",
    "What do independent studies say about this diet?",
    "Is the person cited an expert in the relevant field?",
    "What other explanations could account for the outcome?",
    "How was the effect measured, and over what period?",
    "What would change your mind about this claim?",
];

pub const SUMMARY: &str = "Independent reviews found no trial showing that the Keto Max plan cures diabetes. \
Ketogenic diets can lower blood sugar in the short term for some people with type 2 diabetes, but researchers \
stress that results vary and that long-term safety data are limited. Endorsements from television personalities \
are not medical evidence, and the chef quoted in several posts has no clinical training. Crime figures for the town \
fell across the whole region during the same period, which points to causes unrelated to diet. Experts recommend \
speaking with a doctor before making large dietary changes and looking for peer-reviewed studies rather than \
testimonials or popularity.";

fn detections() -> Vec<DetectedFallacy> {
    let d = |part: &str, label: FallacyLabel, raw: &str, short: &str, long: &str| DetectedFallacy {
        part: part.to_string(),
        label,
        out_of_set: false,
        raw_label: raw.to_string(),
        explain_short: short.to_string(),
        explain_long: long.to_string(),
    };
    vec![
        d(
            "Everyone in my town already switched to the Keto Max plan, so it must be the healthiest diet there is.",
            FallacyLabel::AppealToPopularity,
            "ad populum",
            "Claims the diet is best because many people use it.",
            "The argument treats the number of people following the plan as proof of its health benefits. Popularity says nothing about whether the diet is actually healthy.",
        ),
        d(
            "Dr. Rick, a famous TV chef, says it cures diabetes",
            FallacyLabel::AppealToAuthority,
            "appeal to authority",
            "Cites a TV chef as evidence for a medical claim.",
            "A television chef is not an authority on treating diabetes. His fame does not make his medical claim reliable, and no clinical evidence is given.",
        ),
        d(
            "Anyone who questions it is just a bitter, jealous loser.",
            FallacyLabel::AgainstThePerson,
            "ad hominem",
            "Attacks critics instead of answering their objections.",
            "Rather than addressing why someone might question the diet, the text insults anyone who does. The character of critics has no bearing on whether their concerns are valid.",
        ),
        d(
            "Since the plan became popular, our town's crime rate dropped, which proves the diet calms people down.",
            FallacyLabel::QuestionableCause,
            "questionable cause",
            "Assumes the diet caused the drop in crime because they happened together.",
            "Two things happening at the same time does not show that one caused the other. Crime rates depend on many factors, and no link to diet is shown.",
        ),
        d(
            "Our grandparents never counted calories either.",
            FallacyLabel::Nothing,
            "appeal to tradition",
            "Implies an old habit is right because it is old.",
            "Appeals to what earlier generations did rather than to evidence.",
        ),
    ]
}

pub fn source_url(i: usize) -> String {
    format!("https://news.example.com/keto-max/{i}")
}

fn page_html(i: usize) -> String {
    format!(
        "<html><head><title>Report {i}</title></head><body><nav>Home | Health</nav><article>\
         <h1>What we know about the Keto Max plan ({i})</h1>\
         <p>Researchers reviewed the available studies on ketogenic diets and blood sugar.</p>\
         <p>No trial has shown that the plan cures diabetes, and long-term data are limited.</p>\
         </article><footer>Example News</footer></body></html>"
    )
}

pub fn fake_endpoint() -> FakeEndpoint {
    let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let enrichment = format_enrichment(&strings(&QUESTIONS), &strings(&QUERIES));
    FakeEndpoint::new(FakeFixture {
        model: "demo-fixture".to_string(),
        ..FakeFixture::default()
    })
    .with_response(
        &render_detection(TEXT).expect("demo text is nonempty").body,
        format_detection(&detections()),
    )
    .with_default(PromptTask::DetectFallacies, "nothing")
    .with_default(PromptTask::EnrichAiHighlight, enrichment.clone())
    .with_default(PromptTask::EnrichUserHighlight, enrichment)
    .with_default(PromptTask::ReviseOwnQuery, format_revised_queries(&strings(&REVISED_QUERIES)))
    .with_default(
        PromptTask::ExtractWebContent,
        format_extracts(&strings(&[
            "No trial has shown that the plan cures diabetes.",
            "Long-term data are limited.",
        ])),
    )
    .with_default(PromptTask::SummarizeExtracts, format_summary(SUMMARY))
}

pub fn search() -> FixtureSearch {
    let hits: Vec<SearchHit> = (1..=4)
        .map(|i| SearchHit {
            title: format!("What we know about the Keto Max plan ({i})"),
            url: source_url(i),
            snippet: "Researchers reviewed the available studies.".to_string(),
        })
        .collect();
    FixtureSearch {
        results: QUERIES
            .iter()
            .chain(REVISED_QUERIES.iter())
            .map(|q| (q.to_string(), hits.clone()))
            .collect(),
    }
}

pub fn pages() -> FixturePages {
    FixturePages {
        pages: (1..=4).map(|i| (source_url(i), page_html(i))).collect::<HashMap<_, _>>(),
    }
}

/// Demo state around a caller-supplied endpoint and store.
pub fn state_with(endpoint: Arc<FakeEndpoint>, store: DiscussionStore) -> AppState {
    let gateway = LlmGateway::new(endpoint);
    AppState {
        probe: ProbePipeline::new(Arc::new(search()), Arc::new(pages()), gateway.clone()),
        gateway,
        store: Arc::new(store),
    }
}

pub fn state(store: DiscussionStore) -> AppState {
    state_with(Arc::new(fake_endpoint()), store)
}
