#![allow(dead_code)]

use amrkit::seq_io::{LabelAxis, LabelSet, SequenceRecord, SourceDb};
use amrkit::Dataset;

pub fn record(id: &str, seq: &str, drug_class: &str) -> SequenceRecord {
    let mut labels = LabelSet::default();
    labels.set(LabelAxis::DrugClass, Some(drug_class.to_string()));
    SequenceRecord {
        id: id.to_string(),
        header: id.to_string(),
        nucleotides: seq.to_string(),
        source_db: SourceDb::Card,
        labels,
    }
}

pub fn text_record(id: &str, drug_class: &str, family: &str, mechanism: &str) -> SequenceRecord {
    let mut r = record(id, "", drug_class);
    r.labels.set(LabelAxis::GeneFamily, Some(family.to_string()));
    r.labels.set(LabelAxis::Mechanism, Some(mechanism.to_string()));
    r
}

pub fn dataset(records: Vec<SequenceRecord>) -> Dataset {
    Dataset::new(records, LabelAxis::DrugClass).unwrap()
}

/// Brute-force macro-F1 straight from label lists.
pub fn macro_f1_oracle(preds: &[usize], golds: &[usize], n_classes: usize) -> f64 {
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..n_classes {
        let tp = preds.iter().zip(golds).filter(|(p, g)| **p == c && **g == c).count() as f64;
        let pred_c = preds.iter().filter(|p| **p == c).count() as f64;
        let gold_c = golds.iter().filter(|g| **g == c).count() as f64;
        if gold_c == 0.0 {
            continue;
        }
        present += 1;
        let prec = if pred_c == 0.0 { 0.0 } else { tp / pred_c };
        let rec = tp / gold_c;
        sum += if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    }
    sum / present as f64
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Fixture directory shipped with the repository.
pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}
