use super::features::{bag_of_words, build_word_vocab, kmer_frequencies, SparseVec};
use super::{check_sequence, ClassifierError, FeatureKind, ModelInput, TrainConfig};
use crate::par;
use crate::rng::SplitMix64;

/// Multinomial logistic regression `softmax(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    pub features: FeatureKind,
    /// Sorted word vocabulary (bag-of-words only).
    pub word_vocab: Vec<String>,
    /// Row-major `[class][feature]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn n_features(&self) -> usize {
        match self.features {
            FeatureKind::KmerFrequency { k } => 1usize << (2 * k),
            FeatureKind::BagOfWords => self.word_vocab.len(),
        }
    }

    pub fn featurize(&self, payload: &str) -> Result<SparseVec, ClassifierError> {
        featurize(self.features, &self.word_vocab, payload)
    }

    pub fn logits(&self, payload: &str) -> Result<Vec<f64>, ClassifierError> {
        let x = self.featurize(payload)?;
        Ok(logits(&self.weights, &self.bias, self.n_features(), &x))
    }

    pub(super) fn fit(
        inputs: &[ModelInput],
        labels: &[usize],
        n_classes: usize,
        features: FeatureKind,
        cfg: &TrainConfig,
    ) -> Result<(Self, Vec<f64>), ClassifierError> {
        let word_vocab = match features {
            FeatureKind::BagOfWords => build_word_vocab(inputs.iter().map(|x| x.payload())),
            FeatureKind::KmerFrequency { .. } => Vec::new(),
        };
        let xs = par::try_map(inputs, |x| featurize(features, &word_vocab, x.payload()))?;
        let n_features = match features {
            FeatureKind::KmerFrequency { k } => 1usize << (2 * k),
            FeatureKind::BagOfWords => word_vocab.len(),
        };
        let mut rng = SplitMix64::new(cfg.seed);
        let mut weights: Vec<f64> = (0..n_classes * n_features).map(|_| (rng.next_f64() * 2.0 - 1.0) * 0.01).collect();
        let mut bias = vec![0.0; n_classes];
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let (loss, gw, gb) = loss_and_gradient(&weights, &bias, n_features, &xs, labels, cfg.l2);
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            history.push(loss);
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= cfg.learning_rate * g;
            }
            for (b, g) in bias.iter_mut().zip(&gb) {
                *b -= cfg.learning_rate * g;
            }
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(ClassifierError::NonFiniteLoss { epoch: cfg.epochs });
        }
        Ok((SoftmaxRegression { features, word_vocab, weights, bias }, history))
    }
}

fn featurize(kind: FeatureKind, vocab: &[String], payload: &str) -> Result<SparseVec, ClassifierError> {
    match kind {
        FeatureKind::KmerFrequency { k } => {
            check_sequence(payload)?;
            Ok(kmer_frequencies(payload, k))
        }
        FeatureKind::BagOfWords => Ok(bag_of_words(payload, vocab)),
    }
}

fn logits(weights: &[f64], bias: &[f64], n_features: usize, x: &SparseVec) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(c, b)| b + x.dot(&weights[c * n_features..(c + 1) * n_features]))
        .collect()
}

/// Mean cross-entropy plus `l2·‖W‖²` and its gradient with respect to
/// `weights` (row-major `[class][feature]`) and `bias`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: &[f64],
    n_features: usize,
    xs: &[SparseVec],
    labels: &[usize],
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let c = bias.len();
    let nw = c * n_features;
    let samples: Vec<(&SparseVec, usize)> = xs.iter().zip(labels.iter().copied()).collect();
    // acc layout: [loss, grad_w (c*f), grad_b (c)]
    let acc = par::sum_chunked(&samples, 1 + nw + c, |chunk, acc| {
        for &(x, y) in chunk {
            let z = logits(weights, bias, n_features, x);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            acc[0] += lse - z[y];
            for (k, zk) in z.iter().enumerate() {
                let r = (zk - lse).exp() - if k == y { 1.0 } else { 0.0 };
                for (i, v) in x.iter() {
                    acc[1 + k * n_features + i] += r * v;
                }
                acc[1 + nw + k] += r;
            }
        }
    });
    let n = xs.len().max(1) as f64;
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    let loss = acc[0] / n + l2 * sq;
    let gw = acc[1..1 + nw].iter().zip(weights).map(|(g, w)| g / n + 2.0 * l2 * w).collect();
    let gb = acc[1 + nw..].iter().map(|g| g / n).collect();
    (loss, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_at_zero_weights_is_log_c() {
        let xs = vec![SparseVec::from_dense(&[1.0, 0.0]), SparseVec::from_dense(&[0.0, 2.0])];
        let (loss, gw, gb) = loss_and_gradient(&[0.0; 6], &[0.0; 3], 2, &xs, &[0, 2], 0.1);
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert_eq!(gw.len(), 6);
        // bias gradient: mean(p - y) = 1/3 - (#y==c)/2
        assert!((gb[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((gb[0] - (1.0 / 3.0 - 0.5)).abs() < 1e-12);
    }
}
