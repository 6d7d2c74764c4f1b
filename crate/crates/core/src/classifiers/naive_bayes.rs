use super::features::kmer_counts;
use super::{check_sequence, ClassifierError, ModelInput};
use crate::par;

/// Multinomial naive Bayes over the full 4^k k-mer space.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub k: usize,
    pub alpha: f64,
    /// `log P(c)`, one per class.
    pub log_prior: Vec<f64>,
    /// Row-major `[class][kmer]` table of `log P(kmer | c)`.
    pub log_likelihood: Vec<f64>,
}

impl NaiveBayes {
    pub fn n_features(&self) -> usize {
        1usize << (2 * self.k)
    }

    pub fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    /// Builds the model from sufficient statistics: per-class document
    /// counts and a row-major `[class][kmer]` count table.
    pub fn from_counts(k: usize, alpha: f64, class_counts: &[f64], feature_counts: &[f64]) -> Self {
        let v = 1usize << (2 * k);
        let c = class_counts.len();
        assert_eq!(feature_counts.len(), c * v, "feature table must be classes x 4^k");
        let n: f64 = class_counts.iter().sum();
        let log_prior = class_counts.iter().map(|&m| (m / n).ln()).collect();
        let mut log_likelihood = Vec::with_capacity(c * v);
        for row in feature_counts.chunks(v) {
            let denom = (row.iter().sum::<f64>() + alpha * v as f64).ln();
            log_likelihood.extend(row.iter().map(|&x| (x + alpha).ln() - denom));
        }
        NaiveBayes { k, alpha, log_prior, log_likelihood }
    }

    pub(super) fn fit(inputs: &[ModelInput], labels: &[usize], n_classes: usize, k: usize, alpha: f64) -> Self {
        let v = 1usize << (2 * k);
        let per_record = par::map(inputs, |x| kmer_counts(x.payload(), k));
        let mut class_counts = vec![0.0; n_classes];
        let mut table = vec![0.0; n_classes * v];
        for (sv, &y) in per_record.iter().zip(labels) {
            class_counts[y] += 1.0;
            let row = &mut table[y * v..(y + 1) * v];
            for (i, x) in sv.iter() {
                row[i] += x;
            }
        }
        NaiveBayes::from_counts(k, alpha, &class_counts, &table)
    }

    /// Unnormalized `log P(c) + Σ log P(kmer | c)` per class.
    pub fn log_joint(&self, seq: &str) -> Result<Vec<f64>, ClassifierError> {
        check_sequence(seq)?;
        let counts = kmer_counts(seq, self.k);
        let v = self.n_features();
        Ok((0..self.n_classes())
            .map(|c| self.log_prior[c] + counts.dot(&self.log_likelihood[c * v..(c + 1) * v]))
            .collect())
    }
}
