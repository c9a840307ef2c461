use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fallacy_core::eval::ClassifyConfig;
use fallacy_core::gateway::{
    AdapterKind, CompletionEndpoint, EndpointConfig, FakeEndpoint, HttpEndpoint, LlmGateway, RetryPolicy,
    DEFAULT_MAX_ATTEMPTS, DEFAULT_MAX_IN_FLIGHT,
};

#[derive(Parser)]
#[command(name = "eval", version, about = "Filter, assemble, classify and score the fallacy evaluation set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop duplicates, out-of-scope labels, definitions, Latin phrases and quizzes.
    Filter {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory with definition.txt, latin.txt and quiz.txt overrides.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove the few-shot examples and append the fact statements.
    Assemble {
        #[arg(long)]
        filtered: PathBuf,
        /// One fact per line; defaults to the bundled list.
        #[arg(long)]
        facts: Option<PathBuf>,
        /// Few-shot records as JSON Lines; defaults to the bundled set.
        #[arg(long)]
        fewshot: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a label-stratified sample.
    Sample {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every instance with the detection prompt.
    Run(RunArgs),
    /// Score a results file and write metrics, breakdown and confusion matrices.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// OpenAI-compatible completion endpoint.
    #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
    endpoint: Option<String>,
    #[arg(long, default_value = "meta-llama/Meta-Llama-3-8B-Instruct")]
    model: String,
    #[arg(long, value_enum, default_value = "chat")]
    adapter: Adapter,
    /// Environment variable holding the endpoint's bearer token.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Scripted completions instead of a live endpoint.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Completion cache directory; reruns skip cached instances.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 0.05)]
    max_failure_rate: f64,
    #[arg(long, default_value_t = 120)]
    deadline_secs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Adapter {
    Chat,
    Completion,
}

impl RunArgs {
    fn gateway(&self) -> Result<LlmGateway> {
        let endpoint: Arc<dyn CompletionEndpoint> = match (&self.fixture, &self.endpoint) {
            (Some(path), _) => {
                Arc::new(FakeEndpoint::load(path).with_context(|| format!("loading fixture {}", path.display()))?)
            }
            (None, Some(url)) => Arc::new(HttpEndpoint::new(&EndpointConfig {
                url: url.clone(),
                model: self.model.clone(),
                adapter: match self.adapter {
                    Adapter::Chat => AdapterKind::Chat,
                    Adapter::Completion => AdapterKind::Completion,
                },
                api_key_env: self.api_key_env.clone(),
                max_attempts: DEFAULT_MAX_ATTEMPTS,
                deadline_secs: self.deadline_secs,
                max_in_flight: self.concurrency.max(DEFAULT_MAX_IN_FLIGHT),
            })?),
            (None, None) => bail!("either --endpoint or --fixture is required"),
        };
        Ok(LlmGateway::with_policy(endpoint, RetryPolicy::default(), self.concurrency.max(1))
            .with_deadline(Duration::from_secs(self.deadline_secs)))
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Filter { dataset, patterns, out } => {
            let stats = fallacy_eval::filter(&dataset, patterns.as_deref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Assemble { filtered, facts, fewshot, out } => {
            let n = fallacy_eval::assemble(&filtered, facts.as_deref(), fewshot.as_deref(), &out)?;
            println!("{n} instances written to {}", out.display());
        }
        Command::Sample { dataset, n, seed, out } => {
            let n = fallacy_eval::sample(&dataset, n, seed, &out)?;
            println!("{n} instances written to {}", out.display());
        }
        Command::Run(args) => {
            let gateway = args.gateway()?;
            let config = ClassifyConfig {
                cache_dir: args.cache.clone(),
                concurrency: args.concurrency.max(1),
                max_failure_rate: args.max_failure_rate,
                ..ClassifyConfig::default()
            };
            let started = Instant::now();
            let outcome = fallacy_eval::run(&args.dataset, &gateway, &config, &args.out).await?;
            println!(
                "{} classified, {} failed, {} cached, {} endpoint calls in {:.1}s",
                outcome.results.len(),
                outcome.failures.len(),
                outcome.cache_hits,
                outcome.endpoint_calls,
                started.elapsed().as_secs_f64()
            );
            for f in &outcome.failures {
                eprintln!("failed: {:?}: {}", f.text, f.error);
            }
        }
        Command::Report { results, out } => {
            let report = fallacy_eval::report(&results, &out)?;
            print!("{}", report.text);
        }
    }
    Ok(())
}
