use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EvalError, GatewayError};
use crate::eval::dataset::EvalInstance;
use crate::gateway::LlmGateway;
use crate::parser::parse_detection;
use crate::prompt::render_detection;
use crate::taxonomy::FallacyLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedInstance {
    pub text: String,
    pub gold: FallacyLabel,
    pub predicted: FallacyLabel,
    /// The model named a fallacy outside the taxonomy.
    pub out_of_set: bool,
    /// The label as the model wrote it, when it named one.
    #[serde(default)]
    pub raw_label: Option<String>,
    /// The completion could not be parsed and was scored as `Nothing`.
    #[serde(default)]
    pub unparsed: bool,
}

pub fn pairs(results: &[ClassifiedInstance]) -> Vec<(FallacyLabel, FallacyLabel)> {
    results.iter().map(|r| (r.gold, r.predicted)).collect()
}

#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    /// Directory for cached completions; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Additional attempts per instance after the gateway gives up.
    pub instance_retries: u32,
    /// The run aborts when failures exceed this fraction of instances.
    pub max_failure_rate: f64,
    pub concurrency: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            cache_dir: None,
            instance_retries: 2,
            max_failure_rate: 0.05,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub text: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    /// Successful classifications, in input order.
    pub results: Vec<ClassifiedInstance>,
    pub failures: Vec<InstanceFailure>,
    pub cache_hits: usize,
    pub endpoint_calls: usize,
}

/// Turns a detection completion into a single predicted label: the first
/// detected fallacy, or `Nothing` for a "nothing" answer, an out-of-set
/// label, or an unparseable completion.
pub fn predict(instance: &EvalInstance, raw: &str) -> ClassifiedInstance {
    let mut out = ClassifiedInstance {
        text: instance.text.clone(),
        gold: instance.gold,
        predicted: FallacyLabel::Nothing,
        out_of_set: false,
        raw_label: None,
        unparsed: false,
    };
    match parse_detection(raw) {
        Ok(found) => {
            if let Some(first) = found.into_iter().next() {
                out.out_of_set = first.out_of_set;
                out.raw_label = Some(first.raw_label);
                if !first.out_of_set {
                    out.predicted = first.label;
                }
            }
        }
        Err(_) => out.unparsed = true,
    }
    out
}

pub fn cache_key(model_id: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    text: String,
    completion: String,
}

async fn read_cache(dir: &Path, key: &str) -> Option<String> {
    let bytes = tokio::fs::read(dir.join(format!("{key}.json"))).await.ok()?;
    serde_json::from_slice::<CacheEntry>(&bytes).ok().map(|e| e.completion)
}

async fn write_cache(dir: &Path, key: &str, entry: &CacheEntry) -> std::io::Result<()> {
    let tmp = dir.join(format!("{key}.json.tmp"));
    tokio::fs::write(&tmp, serde_json::to_vec(entry)?).await?;
    tokio::fs::rename(tmp, dir.join(format!("{key}.json"))).await
}

enum Step {
    Done(ClassifiedInstance),
    Failed(InstanceFailure),
}

/// Classifies every instance with the detection prompt. Completions are
/// cached on disk by (model id, text) so interrupted runs resume cheaply.
pub async fn classify_all(
    gateway: &LlmGateway,
    instances: &[EvalInstance],
    config: &ClassifyConfig,
) -> Result<ClassifyOutcome, EvalError> {
    if let Some(dir) = &config.cache_dir {
        tokio::fs::create_dir_all(dir).await?;
    }
    let hits = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let model = gateway.model_id().to_string();

    let steps: Vec<Result<Step, EvalError>> = stream::iter(instances)
        .map(|inst| {
            let (hits, calls, model) = (&hits, &calls, &model);
            async move {
                let key = cache_key(model, &inst.text);
                if let Some(dir) = &config.cache_dir {
                    if let Some(raw) = read_cache(dir, &key).await {
                        hits.fetch_add(1, Ordering::Relaxed);
                        return Ok(Step::Done(predict(inst, &raw)));
                    }
                }
                let prompt = render_detection(&inst.text)?;
                let mut last = String::new();
                for _ in 0..=config.instance_retries {
                    calls.fetch_add(1, Ordering::Relaxed);
                    match gateway.complete_prompt(prompt.clone()).await {
                        Ok(done) => {
                            if let Some(dir) = &config.cache_dir {
                                let entry = CacheEntry {
                                    model: model.clone(),
                                    text: inst.text.clone(),
                                    completion: done.raw_text.clone(),
                                };
                                if let Err(e) = write_cache(dir, &key, &entry).await {
                                    tracing::warn!(error = %e, "could not write completion cache");
                                }
                            }
                            return Ok(Step::Done(predict(inst, &done.raw_text)));
                        }
                        Err(GatewayError::Config(msg)) => {
                            return Err(EvalError::Gateway(GatewayError::Config(msg)))
                        }
                        Err(e) => last = e.to_string(),
                    }
                }
                Ok(Step::Failed(InstanceFailure {
                    text: inst.text.clone(),
                    error: last,
                }))
            }
        })
        .buffered(config.concurrency.max(1))
        .collect()
        .await;

    let mut outcome = ClassifyOutcome::default();
    for step in steps {
        match step? {
            Step::Done(r) => outcome.results.push(r),
            Step::Failed(f) => outcome.failures.push(f),
        }
    }
    let total = instances.len();
    let failed = outcome.failures.len();
    if total > 0 && failed as f64 / total as f64 > config.max_failure_rate {
        return Err(EvalError::TooManyFailures { failed, total });
    }
    outcome.cache_hits = hits.into_inner();
    outcome.endpoint_calls = calls.into_inner();
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FakeEndpoint, FakeFixture, RetryPolicy};
    use crate::prompt::PromptTask;
    use std::sync::Arc;
    use std::time::Duration;

    fn inst(text: &str, gold: FallacyLabel) -> EvalInstance {
        EvalInstance {
            text: text.into(),
            gold,
        }
    }

    fn block(label: &str) -> String {
        format!(
            "{{\n  \"part\": \"x\",\n  \"fallacy\": \"{label}\",\n  \"explain_short\": \"s\",\n  \"explain_long\": \"l\"\n}}"
        )
    }

    #[test]
    fn prediction_rules() {
        let i = inst("x", FallacyLabel::AppealToAuthority);
        assert_eq!(predict(&i, "nothing").predicted, FallacyLabel::Nothing);
        let celeb = predict(&i, &block("appeal to celebrity"));
        assert_eq!(celeb.predicted, FallacyLabel::Nothing);
        assert!(celeb.out_of_set);
        assert_eq!(celeb.raw_label.as_deref(), Some("appeal to celebrity"));
        let two = format!("{},\n{}", block("ad populum"), block("ad hominem"));
        assert_eq!(predict(&i, &two).predicted, FallacyLabel::AppealToPopularity);
        let junk = predict(&i, "I cannot help with that.");
        assert!(junk.unparsed);
        assert_eq!(junk.predicted, FallacyLabel::Nothing);
    }

    fn gateway(fake: FakeEndpoint) -> (LlmGateway, Arc<FakeEndpoint>) {
        let fake = Arc::new(fake);
        let policy = RetryPolicy {
            max_attempts: 1,
            base_backoff: Duration::from_millis(1),
        };
        (LlmGateway::with_policy(fake.clone(), policy, 4), fake)
    }

    #[tokio::test]
    async fn cached_rerun_makes_no_calls() {
        let dir = tempfile::tempdir().unwrap();
        let fake = FakeEndpoint::new(FakeFixture::default()).with_default(PromptTask::DetectFallacies, block("ad hominem"));
        let (gw, fake) = gateway(fake);
        let items = vec![
            inst("You are an idiot, so you are wrong.", FallacyLabel::AgainstThePerson),
            inst("Water boils at 100 C.", FallacyLabel::Nothing),
        ];
        let config = ClassifyConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let first = classify_all(&gw, &items, &config).await.unwrap();
        assert_eq!(first.endpoint_calls, 2);
        assert_eq!(fake.calls(), 2);
        let second = classify_all(&gw, &items, &config).await.unwrap();
        assert_eq!(second.endpoint_calls, 0);
        assert_eq!(second.cache_hits, 2);
        assert_eq!(fake.calls(), 2);
        assert_eq!(first.results, second.results);
    }

    #[tokio::test]
    async fn failures_abort_over_threshold() {
        // No default response: every call is rejected.
        let (gw, _) = gateway(FakeEndpoint::new(FakeFixture::default()));
        let items = vec![inst("a", FallacyLabel::AgainstThePerson)];
        let err = classify_all(&gw, &items, &ClassifyConfig::default()).await.unwrap_err();
        assert!(matches!(err, EvalError::TooManyFailures { failed: 1, total: 1 }));

        let lenient = ClassifyConfig {
            max_failure_rate: 1.0,
            instance_retries: 0,
            ..Default::default()
        };
        let out = classify_all(&gw, &items, &lenient).await.unwrap();
        assert_eq!(out.failures.len(), 1);
        assert!(out.results.is_empty());
    }
}
