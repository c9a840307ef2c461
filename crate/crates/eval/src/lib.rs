//! File-level steps of the evaluation workflow. Each step reads and writes
//! JSON Lines so runs can be inspected and resumed between steps.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use fallacy_core::eval::report::sig3;
use fallacy_core::eval::{
    assemble_eval_set, breakdown_report, check_targets, classify_all, compute_metrics, default_facts,
    default_fewshot, filter_dataset_with_stats, load_instances, load_records, pairs, render_confusion,
    stratified_sample, write_instances, ClassifiedInstance, ClassifyConfig, ClassifyOutcome, FilterRules,
    FilterStats, MetricsMode, MetricsReport, TargetCheck,
};
use fallacy_core::eval::dataset::parse_facts;
use fallacy_core::gateway::LlmGateway;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn filter(dataset: &Path, patterns: Option<&Path>, out: &Path) -> Result<FilterStats> {
    let raw = load_records(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let rules = match patterns {
        Some(dir) => FilterRules::from_dir(dir)?,
        None => FilterRules::default(),
    };
    let (kept, stats) = filter_dataset_with_stats(&raw, &rules);
    let mut w = create(out)?;
    write_instances(&mut w, &kept)?;
    w.flush()?;
    Ok(stats)
}

pub fn assemble(filtered: &Path, facts: Option<&Path>, fewshot: Option<&Path>, out: &Path) -> Result<usize> {
    let filtered = load_instances(filtered).with_context(|| format!("reading {}", filtered.display()))?;
    let facts = match facts {
        Some(p) => parse_facts(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => default_facts(),
    };
    let fewshot = match fewshot {
        Some(p) => load_records(p).with_context(|| format!("reading {}", p.display()))?,
        None => default_fewshot(),
    };
    let set = assemble_eval_set(&filtered, &facts, &fewshot)?;
    let mut w = create(out)?;
    write_instances(&mut w, &set)?;
    w.flush()?;
    Ok(set.len())
}

pub fn sample(dataset: &Path, n: usize, seed: u64, out: &Path) -> Result<usize> {
    let items = load_instances(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let picked = stratified_sample(&items, n, seed);
    let mut w = create(out)?;
    write_instances(&mut w, &picked)?;
    w.flush()?;
    Ok(picked.len())
}

pub async fn run(dataset: &Path, gateway: &LlmGateway, config: &ClassifyConfig, out: &Path) -> Result<ClassifyOutcome> {
    let items = load_instances(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let outcome = classify_all(gateway, &items, config).await?;
    let mut w = create(out)?;
    for r in &outcome.results {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(outcome)
}

pub fn load_results(path: &Path) -> Result<Vec<ClassifiedInstance>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("reading {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub struct Report {
    pub full: MetricsReport,
    pub subset: MetricsReport,
    pub targets: Vec<TargetCheck>,
    pub text: String,
}

/// Scores a results file in both modes and writes the metrics, breakdown,
/// confusion matrices and target check into `out_dir`.
pub fn report(results: &Path, out_dir: &Path) -> Result<Report> {
    let results = load_results(results)?;
    let scored = pairs(&results);
    let full = compute_metrics(&scored, MetricsMode::Full)?;
    let subset = compute_metrics(&scored, MetricsMode::Subset)?;
    let targets = check_targets(&full, &subset);
    std::fs::create_dir_all(out_dir)?;

    let write = |name: &str, body: &str| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write("metrics_full.json", &serde_json::to_string_pretty(&full)?)?;
    write("metrics_subset.json", &serde_json::to_string_pretty(&subset)?)?;
    write("breakdown.csv", &breakdown_report(&scored).to_csv())?;
    write("targets.json", &serde_json::to_string_pretty(&targets)?)?;

    let subset_pairs: Vec<_> = scored.iter().copied().filter(|(_, p)| p.is_fallacy()).collect();
    for (mode, data) in [("full", &scored), ("subset", &subset_pairs)] {
        for (kind, normalized) in [("normalized", true), ("counts", false)] {
            let art = render_confusion(data, normalized, &format!("{mode} data ({kind})"));
            write(&format!("confusion_{mode}_{kind}.csv"), &art.csv)?;
            write(&format!("confusion_{mode}_{kind}.svg"), &art.svg)?;
        }
    }

    let mut text = String::new();
    let line = |t: &mut String, s: String| {
        t.push_str(&s);
        t.push('\n');
    };
    line(&mut text, format!("full   n={:<4} accuracy {:.3}  macro F1 {:.3}", full.n, full.accuracy, full.macro_avg.f1));
    line(&mut text, format!("subset n={:<4} accuracy {:.3}  weighted F1 {:.3}", subset.n, subset.accuracy, subset.weighted_avg.f1));
    let flagged = results.iter().filter(|r| r.out_of_set).count();
    let unparsed = results.iter().filter(|r| r.unparsed).count();
    line(&mut text, format!("out-of-set labels {flagged}, unparsed completions {unparsed}"));
    for t in &targets {
        line(
            &mut text,
            format!("{:<8}{} {} (target {})", if t.pass { "PASS" } else { "OUTSIDE" }, t.name, sig3(t.observed), t.target),
        );
    }
    Ok(Report { full, subset, targets, text })
}
