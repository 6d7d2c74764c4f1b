//! Sparse feature vectors for the baseline classifiers.

use std::collections::{BTreeMap, BTreeSet};

use crate::tokenizer::for_each_kmer_index;

/// Sorted-index sparse vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut v = SparseVec::default();
        for (i, &x) in dense.iter().enumerate() {
            if x != 0.0 {
                v.indices.push(i as u32);
                v.values.push(x);
            }
        }
        v
    }

    fn from_counts(counts: BTreeMap<u32, f64>) -> Self {
        let (indices, values) = counts.into_iter().unzip();
        SparseVec { indices, values }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }
}

/// Stride-1 k-mer counts over ACGT windows (windows with N are skipped).
pub fn kmer_counts(seq: &str, k: usize) -> SparseVec {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for_each_kmer_index(seq.as_bytes(), k, |i| *counts.entry(i as u32).or_insert(0.0) += 1.0);
    SparseVec::from_counts(counts)
}

/// k-mer counts divided by the number of counted windows.
pub fn kmer_frequencies(seq: &str, k: usize) -> SparseVec {
    let mut v = kmer_counts(seq, k);
    let total = v.sum();
    if total > 0.0 {
        for x in &mut v.values {
            *x /= total;
        }
    }
    v
}

/// Lowercased alphanumeric word tokens.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase)
}

/// Sorted word vocabulary of a corpus.
pub fn build_word_vocab<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<String> = texts.into_iter().flat_map(words).collect();
    set.into_iter().collect()
}

/// Word counts against a sorted vocabulary; unknown words are ignored.
pub fn bag_of_words(text: &str, vocab: &[String]) -> SparseVec {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for w in words(text) {
        if let Ok(i) = vocab.binary_search(&w) {
            *counts.entry(i as u32).or_insert(0.0) += 1.0;
        }
    }
    SparseVec::from_counts(counts)
}
