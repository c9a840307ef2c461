use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::taxonomy::FallacyLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricsMode {
    /// All results; macro averaging is the reported figure.
    Full,
    /// Results not predicted `Nothing`; weighted averaging is reported.
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: MetricsMode,
    pub n: usize,
    pub accuracy: f64,
    /// Classes occurring as gold or prediction; the averaging population.
    pub per_class: BTreeMap<FallacyLabel, ClassMetrics>,
    pub macro_avg: AveragedMetrics,
    pub weighted_avg: AveragedMetrics,
    pub reported: Averaging,
    /// Rows are gold, columns predicted, both in `FallacyLabel::ALL` order.
    pub confusion: Vec<Vec<usize>>,
    pub normalized_confusion: Vec<Vec<f64>>,
}

impl MetricsReport {
    pub fn reported_avg(&self) -> AveragedMetrics {
        match self.reported {
            Averaging::Macro => self.macro_avg,
            Averaging::Weighted => self.weighted_avg,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn confusion_matrix(pairs: &[(FallacyLabel, FallacyLabel)]) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; FallacyLabel::ALL.len()]; FallacyLabel::ALL.len()];
    for (gold, pred) in pairs {
        m[gold.index()][pred.index()] += 1;
    }
    m
}

/// Each row divided by its sum; rows with no support stay zero.
pub fn normalize_rows(m: &[Vec<usize>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter().map(|&c| ratio(c, total)).collect()
        })
        .collect()
}

/// Scores `(gold, predicted)` pairs.
pub fn compute_metrics(
    pairs: &[(FallacyLabel, FallacyLabel)],
    mode: MetricsMode,
) -> Result<MetricsReport, EvalError> {
    let scored: Vec<(FallacyLabel, FallacyLabel)> = match mode {
        MetricsMode::Full => pairs.to_vec(),
        MetricsMode::Subset => pairs
            .iter()
            .copied()
            .filter(|(_, p)| *p != FallacyLabel::Nothing)
            .collect(),
    };
    if scored.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let confusion = confusion_matrix(&scored);
    let n = scored.len();
    let correct: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();

    let classes: BTreeSet<FallacyLabel> = scored.iter().flat_map(|(g, p)| [*g, *p]).collect();
    let mut per_class = BTreeMap::new();
    for c in &classes {
        let i = c.index();
        let tp = confusion[i][i];
        let predicted: usize = confusion.iter().map(|row| row[i]).sum();
        let support: usize = confusion[i].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        per_class.insert(
            *c,
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            },
        );
    }
    let k = per_class.len() as f64;
    let macro_avg = AveragedMetrics {
        precision: per_class.values().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.values().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.values().map(|m| m.f1).sum::<f64>() / k,
    };
    let w = |f: fn(&ClassMetrics) -> f64| {
        per_class.values().map(|m| f(m) * m.support as f64).sum::<f64>() / n as f64
    };
    let weighted_avg = AveragedMetrics {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    };
    Ok(MetricsReport {
        mode,
        n,
        accuracy: ratio(correct, n),
        per_class,
        macro_avg,
        weighted_avg,
        reported: match mode {
            MetricsMode::Full => Averaging::Macro,
            MetricsMode::Subset => Averaging::Weighted,
        },
        normalized_confusion: normalize_rows(&confusion),
        confusion,
    })
}
