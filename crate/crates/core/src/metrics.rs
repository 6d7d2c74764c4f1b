//! Confusion matrices and the accuracy / macro-F1 / precision / recall suite.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{preds} predictions but {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("label '{0}' is not in the class vocabulary")]
    UnknownLabel(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_vocab: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_vocab: Vec<String>) -> Self {
        assert_eq!(counts.len(), class_vocab.len());
        assert!(counts.iter().all(|r| r.len() == class_vocab.len()));
        ConfusionMatrix { counts, class_vocab }
    }

    /// From class indices.
    pub fn from_indices(preds: &[usize], golds: &[usize], class_vocab: &[String]) -> Result<Self, MetricsError> {
        if preds.len() != golds.len() {
            return Err(MetricsError::LengthMismatch { preds: preds.len(), golds: golds.len() });
        }
        let n = class_vocab.len();
        let mut counts = vec![vec![0u64; n]; n];
        for (&p, &g) in preds.iter().zip(golds) {
            if p >= n || g >= n {
                return Err(MetricsError::UnknownLabel(format!("class index {}", p.max(g))));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts, class_vocab: class_vocab.to_vec() })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_vocab(&self) -> &[String] {
        &self.class_vocab
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Builds a confusion matrix from label strings.
pub fn confusion<S: AsRef<str>>(preds: &[S], golds: &[S], vocab: &[String]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let lookup = |s: &S| index.get(s.as_ref()).copied().ok_or_else(|| MetricsError::UnknownLabel(s.as_ref().to_string()));
    let p = preds.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
    let g = golds.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
    ConfusionMatrix::from_indices(&p, &g, vocab)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean per-class recall; equal to `macro_recall`.
    pub balanced_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 (0 on zero denominators) and their
/// unweighted means over classes with gold support.
pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = cm.counts.len();
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = cm.counts[c][c];
        let support: u64 = cm.counts[c].iter().sum();
        let predicted: u64 = (0..n).map(|g| cm.counts[g][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class.push(ClassMetrics { class: cm.class_vocab[c].clone(), precision, recall, f1, support });
    }
    let supported: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| supported.iter().map(|m| f(m)).sum::<f64>() / supported.len() as f64;
    let macro_recall = mean(|m| m.recall);
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        macro_f1: mean(|m| m.f1),
        macro_precision: mean(|m| m.precision),
        macro_recall,
        balanced_accuracy: macro_recall,
        per_class,
    })
}

/// One row of a results table: dataset, method and the four headline
/// metrics as percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub report: MetricsReport,
}

pub const TABLE_HEADER: &str = "Dataset\tMethod\tAccuracy\tMacro F1\tPrecision\tRecall\tBalanced Accuracy";

impl ResultRow {
    pub fn tsv(&self) -> String {
        let r = &self.report;
        format!(
            "{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            self.dataset,
            self.method,
            r.accuracy * 100.0,
            r.macro_f1 * 100.0,
            r.macro_precision * 100.0,
            r.macro_recall * 100.0,
            r.balanced_accuracy * 100.0
        )
    }
}

/// Tab-separated table with a header line.
pub fn format_tsv(rows: &[ResultRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.tsv());
    }
    out
}

/// One JSON document per row, full precision.
pub fn format_json(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for row in rows {
        let _ = writeln!(out, "{}", serde_json::to_string(row).expect("report serializes"));
    }
    out
}

/// Per-class breakdown as TSV.
pub fn format_per_class(report: &MetricsReport) -> String {
    let mut out = String::from("Class\tPrecision\tRecall\tF1\tSupport\n");
    for c in &report.per_class {
        let _ = writeln!(out, "{}\t{:.4}\t{:.4}\t{:.4}\t{}", c.class, c.precision, c.recall, c.f1, c.support);
    }
    out
}
