//! Brute-force scoring used to check the metrics implementation. Every
//! count is taken by walking the pairs once per question asked.

use fallacy_core::FallacyLabel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleClass {
    pub label: FallacyLabel,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub classes: Vec<OracleClass>,
    pub macro_prf: (f64, f64, f64),
    pub weighted_prf: (f64, f64, f64),
    pub confusion: Vec<Vec<usize>>,
    pub normalized: Vec<Vec<f64>>,
}

fn div(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `None` when nothing is left to score.
pub fn brute_force(pairs: &[(FallacyLabel, FallacyLabel)], subset: bool) -> Option<OracleReport> {
    let kept: Vec<(FallacyLabel, FallacyLabel)> = pairs
        .iter()
        .copied()
        .filter(|(_, p)| !subset || *p != FallacyLabel::Nothing)
        .collect();
    if kept.is_empty() {
        return None;
    }
    let n = kept.len();
    let mut correct = 0;
    for (g, p) in &kept {
        if g == p {
            correct += 1;
        }
    }
    let mut confusion = Vec::new();
    for g in FallacyLabel::ALL {
        let mut row = Vec::new();
        for p in FallacyLabel::ALL {
            let mut c = 0;
            for pair in &kept {
                if *pair == (g, p) {
                    c += 1;
                }
            }
            row.push(c);
        }
        confusion.push(row);
    }
    let normalized = confusion
        .iter()
        .map(|row| {
            let mut total = 0;
            for c in row {
                total += c;
            }
            row.iter().map(|c| div(*c, total)).collect()
        })
        .collect();

    let mut classes = Vec::new();
    for c in FallacyLabel::ALL {
        let present = kept.iter().any(|(g, p)| *g == c || *p == c);
        if !present {
            continue;
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (g, p) in &kept {
            match (*g == c, *p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = div(tp, tp + fp);
        let recall = div(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        classes.push(OracleClass {
            label: c,
            tp,
            fp,
            fn_,
            support: tp + fn_,
            precision,
            recall,
            f1,
        });
    }
    let k = classes.len() as f64;
    let mut m = (0.0, 0.0, 0.0);
    let mut w = (0.0, 0.0, 0.0);
    for c in &classes {
        m.0 += c.precision;
        m.1 += c.recall;
        m.2 += c.f1;
        w.0 += c.precision * c.support as f64;
        w.1 += c.recall * c.support as f64;
        w.2 += c.f1 * c.support as f64;
    }
    Some(OracleReport {
        n,
        correct,
        accuracy: div(correct, n),
        classes,
        macro_prf: (m.0 / k, m.1 / k, m.2 / k),
        weighted_prf: (w.0 / n as f64, w.1 / n as f64, w.2 / n as f64),
        confusion,
        normalized,
    })
}

/// Exact comparison of an implementation report against the oracle.
pub fn agrees(report: &fallacy_core::eval::MetricsReport, oracle: &OracleReport) -> Result<(), String> {
    let mut problems = Vec::new();
    let mut check = |what: String, ok: bool| {
        if !ok {
            problems.push(what);
        }
    };
    check("n".into(), report.n == oracle.n);
    check("accuracy".into(), report.accuracy == oracle.accuracy);
    check("confusion".into(), report.confusion == oracle.confusion);
    check("normalized".into(), report.normalized_confusion == oracle.normalized);
    check(
        "class set".into(),
        report.per_class.keys().copied().collect::<Vec<_>>() == oracle.classes.iter().map(|c| c.label).collect::<Vec<_>>(),
    );
    for c in &oracle.classes {
        match report.per_class.get(&c.label) {
            Some(m) => check(
                format!("{:?}", c.label),
                m.precision == c.precision && m.recall == c.recall && m.f1 == c.f1 && m.support == c.support,
            ),
            None => check(format!("{:?} missing", c.label), false),
        }
    }
    let triple = |a: fallacy_core::eval::metrics::AveragedMetrics| (a.precision, a.recall, a.f1);
    check("macro".into(), triple(report.macro_avg) == oracle.macro_prf);
    check("weighted".into(), triple(report.weighted_avg) == oracle.weighted_prf);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join(", "))
    }
}
