use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::LazyLock;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::taxonomy::{parse_label, FallacyLabel};

/// One line of a `{text, label}` dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub text: String,
    pub label: String,
    /// Few-shot entries only: match any text starting with `text`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub prefix: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalInstance {
    pub text: String,
    pub gold: FallacyLabel,
}

impl From<&EvalInstance> for RawRecord {
    fn from(i: &EvalInstance) -> Self {
        RawRecord {
            text: i.text.clone(),
            label: i.gold.english_name().to_lowercase(),
            prefix: false,
        }
    }
}

/// Maps a dataset label onto the taxonomy. Besides the names the detector
/// understands, this accepts the source corpus's own names for two classes.
pub fn dataset_label(raw: &str) -> Option<FallacyLabel> {
    let norm = raw.trim().to_lowercase();
    match norm.as_str() {
        "false causality" | "false cause" => Some(FallacyLabel::QuestionableCause),
        "fallacy of credibility" => Some(FallacyLabel::AppealToAuthority),
        _ => {
            let p = parse_label(&norm);
            (!p.out_of_set).then_some(p.label)
        }
    }
}

pub fn read_records(reader: impl BufRead) -> Result<Vec<RawRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| EvalError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads a CSV corpus. The text column is `source_article` or `text`; the
/// label column is `updated_label`, `logical_fallacies` or `label`.
pub fn read_csv_records(reader: impl std::io::Read) -> Result<Vec<RawRecord>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(csv_error(1))?.clone();
    let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let missing = |what: &str| EvalError::Record {
        line: 1,
        message: format!("no {what} column"),
    };
    let text_col = column(&["source_article", "text"]).ok_or_else(|| missing("text"))?;
    let label_col = column(&["updated_label", "logical_fallacies", "label"]).ok_or_else(|| missing("label"))?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_error(i + 2))?;
        out.push(RawRecord {
            text: row.get(text_col).unwrap_or_default().to_string(),
            label: row.get(label_col).unwrap_or_default().to_string(),
            prefix: false,
        });
    }
    Ok(out)
}

fn csv_error(line: usize) -> impl Fn(csv::Error) -> EvalError {
    move |e| EvalError::Record {
        line,
        message: e.to_string(),
    }
}

/// Loads JSON Lines, or CSV when the file name ends in `.csv`.
pub fn load_records(path: &Path) -> Result<Vec<RawRecord>, EvalError> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv_records(file)
    } else {
        read_records(std::io::BufReader::new(file))
    }
}

/// Reads labelled instances, as written by [`write_instances`].
pub fn load_instances(path: &Path) -> Result<Vec<EvalInstance>, EvalError> {
    load_records(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| match dataset_label(&r.label) {
            Some(gold) => Ok(EvalInstance { text: r.text, gold }),
            None => Err(EvalError::Record {
                line: i + 1,
                message: format!("unknown label {:?}", r.label),
            }),
        })
        .collect()
}

pub fn write_instances(out: &mut impl std::io::Write, items: &[EvalInstance]) -> Result<(), EvalError> {
    for i in items {
        writeln!(out, "{}", serde_json::to_string(&RawRecord::from(i))?)?;
    }
    Ok(())
}

const DEFAULT_DEFINITION: &str = include_str!("../../data/patterns/definition.txt");
const DEFAULT_LATIN: &str = include_str!("../../data/patterns/latin.txt");
const DEFAULT_QUIZ: &str = include_str!("../../data/patterns/quiz.txt");
const DEFAULT_FEWSHOT: &str = include_str!("../../data/fewshot.jsonl");
const DEFAULT_FACTS: &str = include_str!("../../data/facts.txt");

/// Pattern lists for exclusion rules (c) to (e).
#[derive(Debug, Clone)]
pub struct FilterRules {
    pub definition: Vec<Regex>,
    pub latin: Vec<Regex>,
    pub quiz: Vec<Regex>,
}

/// Compiles a pattern file: one case-insensitive regex per line, blank
/// lines and `#` comments ignored.
pub fn compile_patterns(src: &str) -> Result<Vec<Regex>, EvalError> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            RegexBuilder::new(l.trim())
                .case_insensitive(true)
                .multi_line(true)
                .build()
                .map_err(|e| EvalError::Record {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

static BUNDLED_RULES: LazyLock<FilterRules> = LazyLock::new(|| FilterRules {
    definition: compile_patterns(DEFAULT_DEFINITION).expect("bundled patterns compile"),
    latin: compile_patterns(DEFAULT_LATIN).expect("bundled patterns compile"),
    quiz: compile_patterns(DEFAULT_QUIZ).expect("bundled patterns compile"),
});

impl Default for FilterRules {
    fn default() -> Self {
        BUNDLED_RULES.clone()
    }
}

impl FilterRules {
    /// Loads `definition.txt`, `latin.txt` and `quiz.txt` from `dir`,
    /// falling back to the bundled list for any file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self, EvalError> {
        let load = |name: &str, default: &str| -> Result<Vec<Regex>, EvalError> {
            let p = dir.join(name);
            if p.exists() {
                compile_patterns(&std::fs::read_to_string(p)?)
            } else {
                compile_patterns(default)
            }
        };
        Ok(Self {
            definition: load("definition.txt", DEFAULT_DEFINITION)?,
            latin: load("latin.txt", DEFAULT_LATIN)?,
            quiz: load("quiz.txt", DEFAULT_QUIZ)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub duplicates: usize,
    pub out_of_scope: usize,
    pub definition: usize,
    pub latin: usize,
    pub quiz: usize,
    pub kept: usize,
}

pub fn filter_dataset(raw: &[RawRecord], rules: &FilterRules) -> Vec<EvalInstance> {
    filter_dataset_with_stats(raw, rules).0
}

/// Applies the exclusion rules in order: duplicates, out-of-scope labels,
/// definitions, Latin phrases, quiz phrasing. Each record is counted under
/// the first rule that removes it. Order of survivors is preserved.
pub fn filter_dataset_with_stats(
    raw: &[RawRecord],
    rules: &FilterRules,
) -> (Vec<EvalInstance>, FilterStats) {
    let hit = |pats: &[Regex], text: &str| pats.iter().any(|p| p.is_match(text));
    let mut stats = FilterStats {
        input: raw.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in raw {
        let text = rec.text.trim();
        if text.is_empty() || !seen.insert(text.to_string()) {
            stats.duplicates += 1;
            continue;
        }
        let Some(gold) = dataset_label(&rec.label).filter(|l| l.is_fallacy()) else {
            stats.out_of_scope += 1;
            continue;
        };
        if hit(&rules.definition, text) {
            stats.definition += 1;
        } else if hit(&rules.latin, text) {
            stats.latin += 1;
        } else if hit(&rules.quiz, text) {
            stats.quiz += 1;
        } else {
            out.push(EvalInstance {
                text: text.to_string(),
                gold,
            });
        }
    }
    stats.kept = out.len();
    (out, stats)
}

/// The bundled few-shot examples from the detection template.
pub fn default_fewshot() -> Vec<RawRecord> {
    read_records(DEFAULT_FEWSHOT.as_bytes()).expect("bundled few-shot file parses")
}

/// The bundled stand-in corpus of plain factual statements.
pub fn default_facts() -> Vec<String> {
    parse_facts(DEFAULT_FACTS)
}

pub fn parse_facts(src: &str) -> Vec<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// `filtered` minus the few-shot examples, followed by `facts` labelled
/// `Nothing`. Every few-shot entry must match exactly one filtered
/// instance (by exact text, or by prefix for entries marked `prefix`).
pub fn assemble_eval_set(
    filtered: &[EvalInstance],
    facts: &[String],
    fewshot: &[RawRecord],
) -> Result<Vec<EvalInstance>, EvalError> {
    let mut drop = vec![false; filtered.len()];
    for shot in fewshot {
        let text = shot.text.trim();
        let idx = filtered.iter().enumerate().position(|(i, inst)| {
            !drop[i]
                && if shot.prefix {
                    inst.text.starts_with(text)
                } else {
                    inst.text == text
                }
        });
        match idx {
            Some(i) => drop[i] = true,
            None => return Err(EvalError::FewshotNotSubset(text.to_string())),
        }
    }
    let mut out: Vec<EvalInstance> = filtered
        .iter()
        .zip(&drop)
        .filter(|(_, d)| !**d)
        .map(|(i, _)| i.clone())
        .collect();
    out.extend(facts.iter().filter(|f| !f.trim().is_empty()).map(|f| EvalInstance {
        text: f.trim().to_string(),
        gold: FallacyLabel::Nothing,
    }));
    Ok(out)
}

/// Draws `n` instances with per-class counts proportional to the input
/// (largest-remainder rounding), deterministically for a given seed.
/// Output keeps the input order.
pub fn stratified_sample(items: &[EvalInstance], n: usize, seed: u64) -> Vec<EvalInstance> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut by_class: BTreeMap<FallacyLabel, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_class.entry(it.gold).or_default().push(i);
    }
    let total = items.len();
    let mut quotas: Vec<(FallacyLabel, usize, usize)> = by_class
        .iter()
        .map(|(l, idx)| {
            let exact = idx.len() * n;
            (*l, exact / total, exact % total)
        })
        .collect();
    let mut remaining = n - quotas.iter().map(|q| q.1).sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(a.cmp(&b)));
    for i in order {
        if remaining == 0 {
            break;
        }
        quotas[i].1 += 1;
        remaining -= 1;
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (label, quota, _) in quotas {
        let mut idx = by_class[&label].clone();
        idx.shuffle(&mut rng);
        picked.extend(idx.into_iter().take(quota));
    }
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}
