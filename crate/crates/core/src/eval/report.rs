use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::metrics::{confusion_matrix, normalize_rows, MetricsReport};
use crate::taxonomy::FallacyLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub label: FallacyLabel,
    /// Results whose gold label is this fallacy.
    pub all: usize,
    pub nothing: usize,
    pub misclassified: usize,
    pub nothing_pct: f64,
    pub misclassified_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub rows: Vec<BreakdownRow>,
    pub total_all: usize,
    pub total_nothing: usize,
    pub total_misclassified: usize,
    /// Denominator of the totals percentages: every scored result,
    /// including those with gold `Nothing`.
    pub total_n: usize,
    pub total_nothing_pct: f64,
    pub total_misclassified_pct: f64,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Per fallacy: how many gold instances were predicted `Nothing` and how
/// many were predicted anything other than the gold label.
pub fn breakdown_report(pairs: &[(FallacyLabel, FallacyLabel)]) -> Breakdown {
    let rows: Vec<BreakdownRow> = FallacyLabel::FALLACIES
        .iter()
        .map(|&label| {
            let gold: Vec<_> = pairs.iter().filter(|(g, _)| *g == label).collect();
            let nothing = gold.iter().filter(|(_, p)| *p == FallacyLabel::Nothing).count();
            let misclassified = gold.iter().filter(|(g, p)| p != g).count();
            BreakdownRow {
                label,
                all: gold.len(),
                nothing,
                misclassified,
                nothing_pct: pct(nothing, gold.len()),
                misclassified_pct: pct(misclassified, gold.len()),
            }
        })
        .collect();
    let total_nothing = rows.iter().map(|r| r.nothing).sum();
    let total_misclassified = rows.iter().map(|r| r.misclassified).sum();
    Breakdown {
        total_all: rows.iter().map(|r| r.all).sum(),
        total_n: pairs.len(),
        total_nothing_pct: pct(total_nothing, pairs.len()),
        total_misclassified_pct: pct(total_misclassified, pairs.len()),
        total_nothing,
        total_misclassified,
        rows,
    }
}

/// Formats `x` to three significant figures; zero prints as `0`.
pub fn sig3(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

impl Breakdown {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for r in &self.rows {
            write!(out, ",{}", r.label).unwrap();
        }
        out.push_str(",total\n");
        let mut line = |name: &str, cells: Vec<String>, total: String| {
            writeln!(out, "{name},{},{total}", cells.join(",")).unwrap();
        };
        line("all", self.rows.iter().map(|r| r.all.to_string()).collect(), self.total_all.to_string());
        line(
            "classified_nothing",
            self.rows.iter().map(|r| r.nothing.to_string()).collect(),
            self.total_nothing.to_string(),
        );
        line(
            "nothing_pct",
            self.rows.iter().map(|r| sig3(r.nothing_pct)).collect(),
            sig3(self.total_nothing_pct),
        );
        line(
            "misclassified",
            self.rows.iter().map(|r| r.misclassified.to_string()).collect(),
            self.total_misclassified.to_string(),
        );
        line(
            "misclassified_pct",
            self.rows.iter().map(|r| sig3(r.misclassified_pct)).collect(),
            sig3(self.total_misclassified_pct),
        );
        out
    }
}

/// Axis name used on confusion matrices.
pub fn axis_name(label: FallacyLabel) -> &'static str {
    match label {
        FallacyLabel::Nothing => "Nothing",
        other => other.prompt_name(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionArtifact {
    pub normalized: bool,
    pub matrix: Vec<Vec<f64>>,
    pub csv: String,
    pub svg: String,
}

/// 6x6 confusion matrix over the five fallacies plus `Nothing`; rows are
/// gold labels.
pub fn render_confusion(pairs: &[(FallacyLabel, FallacyLabel)], normalized: bool, title: &str) -> ConfusionArtifact {
    let counts = confusion_matrix(pairs);
    let matrix: Vec<Vec<f64>> = if normalized {
        normalize_rows(&counts)
    } else {
        counts.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect()
    };
    let cell = |v: f64| {
        if normalized {
            format!("{v:.4}")
        } else {
            format!("{v:.0}")
        }
    };

    let mut csv = String::from("gold\\predicted");
    for l in FallacyLabel::ALL {
        write!(csv, ",{}", axis_name(l)).unwrap();
    }
    csv.push('\n');
    for (l, row) in FallacyLabel::ALL.iter().zip(&matrix) {
        csv.push_str(axis_name(*l));
        for v in row {
            write!(csv, ",{}", cell(*v)).unwrap();
        }
        csv.push('\n');
    }

    ConfusionArtifact {
        normalized,
        svg: confusion_svg(&matrix, normalized, title),
        csv,
        matrix,
    }
}

fn confusion_svg(matrix: &[Vec<f64>], normalized: bool, title: &str) -> String {
    const CELL: usize = 72;
    const LEFT: usize = 150;
    const TOP: usize = 60;
    let k = matrix.len();
    let width = LEFT + CELL * k + 20;
    let height = TOP + CELL * k + 130;
    let max = if normalized {
        1.0
    } else {
        matrix.iter().flatten().cloned().fold(0.0, f64::max).max(1.0)
    };
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + CELL * k / 2,
        escape(title)
    )
    .unwrap();
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = (v / max).clamp(0.0, 1.0);
            let shade = (255.0 - 200.0 * t).round() as u8;
            let x = LEFT + j * CELL;
            let y = TOP + i * CELL;
            writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="gray"/>"#
            )
            .unwrap();
            let fg = if t > 0.6 { "white" } else { "black" };
            let label = if normalized { format!("{v:.2}") } else { format!("{v:.0}") };
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{fg}">{label}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            )
            .unwrap();
        }
    }
    for (i, l) in FallacyLabel::ALL.iter().enumerate() {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8,
            TOP + i * CELL + CELL / 2 + 4,
            axis_name(*l)
        )
        .unwrap();
        let x = LEFT + i * CELL + CELL / 2;
        let y = TOP + k * CELL + 10;
        writeln!(
            s,
            r#"<text x="{x}" y="{y}" text-anchor="end" transform="rotate(-45 {x} {y})">{}</text>"#,
            axis_name(*l)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Predicted label</text>"#,
        LEFT + CELL * k / 2,
        height - 10
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">True label</text>"#,
        TOP + CELL * k / 2
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Published figures the harness aims for with a Llama-3-8B-Instruct-class
/// model at temperature 0.
pub mod targets {
    pub const FULL_ACCURACY: f64 = 0.85;
    pub const FULL_MACRO_F1: f64 = 0.82;
    pub const SUBSET_ACCURACY: f64 = 0.84;
    pub const SUBSET_WEIGHTED_F1: f64 = 0.85;
    pub const BAND: f64 = 0.08;
    pub const DESK_SAMPLE: usize = 60;
    pub const DESK_MAX_SECONDS: u64 = 15 * 60;
    pub const DESK_MIN_ACCURACY: f64 = 0.70;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCheck {
    pub name: &'static str,
    pub target: f64,
    pub observed: f64,
    pub pass: bool,
}

/// Compares full and subset reports against the published figures.
pub fn check_targets(full: &MetricsReport, subset: &MetricsReport) -> Vec<TargetCheck> {
    use targets::*;
    [
        ("full accuracy", FULL_ACCURACY, full.accuracy),
        ("full macro F1", FULL_MACRO_F1, full.macro_avg.f1),
        ("subset accuracy", SUBSET_ACCURACY, subset.accuracy),
        ("subset weighted F1", SUBSET_WEIGHTED_F1, subset.weighted_avg.f1),
    ]
    .into_iter()
    .map(|(name, target, observed)| TargetCheck {
        name,
        target,
        observed,
        pass: (observed - target).abs() <= BAND,
    })
    .collect()
}
