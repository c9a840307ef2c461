//! HTTP API consumed by the browser extension.

pub mod config;
pub mod demo;
pub mod error;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::future::join_all;
use fallacy_core::gateway::LlmGateway;
use fallacy_core::highlight::{merge, summarize, FallacySummary, Highlight, Origin};
use fallacy_core::parser::{parse_detection, parse_enrichment, parse_revised_queries, EnrichmentResult};
use fallacy_core::probe::{ProbePipeline, WebFindings};
use fallacy_core::prompt::{render_detection, render_enrichment, render_own_query, render_user_highlight};
use fallacy_core::store::{
    canonical_page_key, ChatMessage, DiscussionStore, HighlightContext, InteractionEvent, InteractionKind,
    VoteDirection, Voter,
};
use serde::{Deserialize, Serialize};

pub use error::ApiError;

/// Shown next to the highlights so readers know how far to trust them.
pub const DISCLOSED_ACCURACY: &str = "Fallacies are identified by a language model that was 84% accurate \
in our evaluation. A highlight marks content worth a closer look; it does not mean the claim is false.";

#[derive(Clone)]
pub struct AppState {
    pub gateway: LlmGateway,
    pub probe: ProbePipeline,
    pub store: Arc<DiscussionStore>,
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/analyze", post(analyze))
        .route("/highlights", post(create_user_highlight))
        .route("/highlights/{id}/questions", get(questions))
        .route("/highlights/{id}/own-query", post(own_query))
        .route("/highlights/{id}/messages", post(post_message).get(list_messages))
        .route("/messages/{id}/vote", post(vote))
        .route("/queries/findings", post(findings))
        .route("/events", post(log_event))
        .route("/events/counts", get(event_counts))
        .route("/events/export", get(export_events))
        .with_state(state)
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model: String,
}

async fn healthz(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok",
        model: s.gateway.model_id().to_string(),
    })
}

fn page_key(raw: &str) -> ApiResult<String> {
    canonical_page_key(raw).ok_or_else(|| ApiError::bad_request("page_key must be an http(s) URL"))
}

fn nonempty<'a>(value: &'a str, field: &str) -> ApiResult<&'a str> {
    if value.trim().is_empty() {
        Err(ApiError::bad_request(format!("{field} must not be empty")))
    } else {
        Ok(value)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub page_key: String,
    pub text: String,
}

/// A highlight as the extension renders it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightView {
    #[serde(flatten)]
    pub highlight: Highlight,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallacy: Option<FallacyInfo>,
    pub enrichment: Option<EnrichmentResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallacyInfo {
    pub name: String,
    pub latin_name: String,
    pub strategy: String,
    pub definition: String,
}

fn view(h: Highlight, enrichment: Option<EnrichmentResult>) -> HighlightView {
    let fallacy = h.label.and_then(|l| fallacy_core::card_for(l).ok()).map(|c| FallacyInfo {
        name: c.english_name.to_string(),
        latin_name: c.latin_name.to_string(),
        strategy: format!("{:?}", c.strategy),
        definition: c.definition.to_string(),
    });
    HighlightView {
        highlight: h,
        fallacy,
        enrichment,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub page_key: String,
    pub highlights: Vec<HighlightView>,
    pub summary: FallacySummary,
    pub disclosed_accuracy: String,
}

async fn enrich_ai(gateway: &LlmGateway, text: &str, h: &Highlight) -> ApiResult<Option<EnrichmentResult>> {
    let label = h.label.expect("AI highlights carry a label");
    let prompt = render_enrichment(text, &h.part, label.prompt_name())?;
    let raw = gateway.complete_prompt(prompt).await?.raw_text;
    Ok(parse_enrichment(&raw)
        .map_err(|e| tracing::warn!(highlight = %h.id, error = %e, "enrichment unparseable"))
        .ok())
}

async fn enrich_user(gateway: &LlmGateway, text: &str, h: &Highlight) -> ApiResult<Option<EnrichmentResult>> {
    let reason = h.reason.as_deref().unwrap_or_default();
    let prompt = render_user_highlight(text, &h.part, reason)?;
    let raw = gateway.complete_prompt(prompt).await?.raw_text;
    Ok(parse_enrichment(&raw)
        .map_err(|e| tracing::warn!(highlight = %h.id, error = %e, "enrichment unparseable"))
        .ok())
}

async fn analyze(
    State(s): State<AppState>,
    req: Result<Json<AnalyzeRequest>, JsonRejection>,
) -> ApiResult<Json<AnalyzeResponse>> {
    let Json(req) = req?;
    let key = page_key(&req.page_key)?;
    let text = nonempty(&req.text, "text")?;

    let raw = s.gateway.complete_prompt(render_detection(text)?).await?.raw_text;
    let detected = parse_detection(&raw)?;
    let mut candidates = Vec::new();
    for d in &detected {
        if d.out_of_set {
            tracing::info!(label = %d.raw_label, "ignoring out-of-set label");
            continue;
        }
        match Highlight::from_detection(&key, text, d) {
            Ok(h) => candidates.push(h),
            Err(e) => tracing::info!(error = %e, "dropping unanchored detection"),
        }
    }
    let ai = merge(candidates, Vec::new());
    let enrichments = join_all(ai.iter().map(|h| enrich_ai(&s.gateway, text, h))).await;
    let mut pairs = Vec::with_capacity(ai.len());
    for (h, e) in ai.into_iter().zip(enrichments) {
        pairs.push((h, e?));
    }
    let record = s.store.save_page_analysis(&key, text, pairs)?;

    let summary = summarize(&record.highlights);
    let highlights = record
        .highlights
        .iter()
        .map(|h| view(h.clone(), record.current_enrichment(&h.id).cloned()))
        .collect();
    Ok(Json(AnalyzeResponse {
        page_key: key,
        highlights,
        summary,
        disclosed_accuracy: DISCLOSED_ACCURACY.to_string(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserHighlightRequest {
    pub page_key: String,
    /// Page text; required when the page has not been analyzed yet.
    #[serde(default)]
    pub text: Option<String>,
    pub part: String,
    pub reason: String,
}

async fn create_user_highlight(
    State(s): State<AppState>,
    req: Result<Json<UserHighlightRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<HighlightView>)> {
    let Json(req) = req?;
    let key = page_key(&req.page_key)?;
    nonempty(&req.reason, "reason")?;
    nonempty(&req.part, "part")?;
    let text = match (&req.text, s.store.page(&key)) {
        (Some(t), _) if !t.trim().is_empty() => t.clone(),
        (_, Some(page)) => page.text,
        _ => return Err(ApiError::bad_request("text is required for a page that has not been analyzed")),
    };
    let h = Highlight::user(&key, &text, &req.part, &req.reason)?;
    let enrichment = enrich_user(&s.gateway, &text, &h).await?;
    let h = s.store.add_user_highlight(&key, &text, h, enrichment.clone())?;
    Ok((StatusCode::CREATED, Json(view(h, enrichment))))
}

#[derive(Debug, Deserialize)]
struct QuestionsQuery {
    #[serde(default)]
    refresh: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionsResponse {
    pub highlight_id: String,
    pub questions: Vec<String>,
    pub queries: Vec<String>,
    /// Number of generated sets, including the current one.
    pub generation: usize,
}

async fn regenerate(s: &AppState, ctx: &HighlightContext) -> ApiResult<EnrichmentResult> {
    let fresh = match ctx.highlight.origin {
        Origin::Ai => enrich_ai(&s.gateway, &ctx.text, &ctx.highlight).await?,
        Origin::User => enrich_user(&s.gateway, &ctx.text, &ctx.highlight).await?,
    };
    let fresh = fresh.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_GATEWAY,
            "unparseable_completion",
            "question generation returned an unusable completion",
        )
    })?;
    s.store.push_enrichment(&ctx.highlight.id, fresh.clone())?;
    Ok(fresh)
}

async fn questions(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<QuestionsQuery>, QueryRejection>,
) -> ApiResult<Json<QuestionsResponse>> {
    let Query(q) = q?;
    let ctx = s.store.highlight(&id)?;
    let current = match (&ctx.enrichment, q.refresh) {
        (Some(e), false) => e.clone(),
        _ => regenerate(&s, &ctx).await?,
    };
    Ok(Json(QuestionsResponse {
        highlight_id: id.clone(),
        questions: current.critical_questions,
        queries: current.critical_queries,
        generation: s.store.enrichment_history(&id)?.len(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OwnQueryRequest {
    pub search_terms: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OwnQueryResponse {
    pub highlight_id: String,
    pub queries: Vec<String>,
}

async fn own_query(
    State(s): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<OwnQueryRequest>, JsonRejection>,
) -> ApiResult<Json<OwnQueryResponse>> {
    let Json(req) = req?;
    nonempty(&req.search_terms, "search_terms")?;
    let ctx = s.store.highlight(&id)?;
    let prompt = render_own_query(&ctx.text, &ctx.highlight.part, &req.search_terms)?;
    let raw = s.gateway.complete_prompt(prompt).await?.raw_text;
    Ok(Json(OwnQueryResponse {
        highlight_id: id,
        queries: parse_revised_queries(&raw)?.queries,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FindingsRequest {
    #[serde(default)]
    pub query: String,
}

async fn findings(
    State(s): State<AppState>,
    req: Result<Json<FindingsRequest>, JsonRejection>,
) -> ApiResult<Json<WebFindings>> {
    let Json(req) = req?;
    nonempty(&req.query, "query")?;
    Ok(Json(s.probe.run_findings(&req.query).await?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostMessageRequest {
    pub author: String,
    pub body: String,
}

async fn post_message(
    State(s): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<PostMessageRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ChatMessage>)> {
    let Json(req) = req?;
    nonempty(&req.author, "author")?;
    Ok((StatusCode::CREATED, Json(s.store.post_message(&id, &req.author, &req.body)?)))
}

async fn list_messages(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<ChatMessage>>> {
    Ok(Json(s.store.messages(&id)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoteRequest {
    pub direction: VoteDirection,
    pub username: String,
    pub session: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoteResponse {
    pub message_id: String,
    pub votes: i64,
}

async fn vote(
    State(s): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<VoteRequest>, JsonRejection>,
) -> ApiResult<Json<VoteResponse>> {
    let Json(req) = req?;
    nonempty(&req.username, "username")?;
    nonempty(&req.session, "session")?;
    let voter = Voter {
        username: req.username,
        session: req.session,
    };
    let votes = s.store.vote(&id, req.direction, &voter)?;
    Ok(Json(VoteResponse { message_id: id, votes }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRequest {
    pub session: String,
    pub kind: String,
    #[serde(default)]
    pub payload: String,
}

async fn log_event(
    State(s): State<AppState>,
    req: Result<Json<EventRequest>, JsonRejection>,
) -> ApiResult<StatusCode> {
    let Json(req) = req?;
    nonempty(&req.session, "session")?;
    s.store
        .log_event(InteractionEvent::parse(&req.session, &req.kind, &req.payload)?)?;
    Ok(StatusCode::ACCEPTED)
}

#[derive(Debug, Deserialize)]
struct CountsQuery {
    session: Option<String>,
}

async fn event_counts(
    State(s): State<AppState>,
    q: Result<Query<CountsQuery>, QueryRejection>,
) -> ApiResult<Json<BTreeMap<InteractionKind, usize>>> {
    let Query(q) = q?;
    Ok(Json(s.store.event_counts(q.session.as_deref())))
}

async fn export_events(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    let mut buf = Vec::new();
    s.store.export_events(&mut buf)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], buf))
}
