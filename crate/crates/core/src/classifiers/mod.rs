//! The probabilistic classifier contract and the trainable baselines.
//!
//! Every model, local or behind the bridge, maps a [`ModelInput`] to a
//! [`ProbabilityVector`] aligned with its class vocabulary. Two baselines
//! stand in for large pretrained models: multinomial naive Bayes over k-mer
//! counts ([`train_kmer_nb`]) and softmax regression over k-mer frequencies
//! or bag-of-words ([`train_softmax`]).

pub mod features;
mod model_file;
mod naive_bayes;
mod softmax;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::Dataset;
use crate::par;
use crate::seq_io::{truncate, LabelAxis, SequenceRecord};
use crate::text_format::{pairs_for, render, MarkerStyle, RenderOptions};

pub use model_file::{FORMAT_VERSION, MAGIC};
pub use naive_bayes::NaiveBayes;
pub use softmax::{loss_and_gradient, SoftmaxRegression};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("model expects {expected} input, got {got}")]
    ModalityMismatch { expected: Modality, got: Modality },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("model file format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("remote model: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Sequence,
    Text,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Sequence => "SEQUENCE",
            Modality::Text => "TEXT",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SEQUENCE" => Ok(Modality::Sequence),
            "TEXT" => Ok(Modality::Text),
            other => Err(format!("unknown modality '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelInput {
    /// Normalized, already truncated nucleotide string.
    Sequence(String),
    /// Rendered attribute text.
    Text(String),
}

impl ModelInput {
    pub fn modality(&self) -> Modality {
        match self {
            ModelInput::Sequence(_) => Modality::Sequence,
            ModelInput::Text(_) => Modality::Text,
        }
    }

    pub fn payload(&self) -> &str {
        match self {
            ModelInput::Sequence(s) | ModelInput::Text(s) => s,
        }
    }
}

/// Posterior mass over a class vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self, ClassifierError> {
        ProbabilityVector::with_tolerance(probs, Self::SUM_TOLERANCE)
    }

    /// Validates non-negativity, finiteness and `|sum - 1| <= tol`.
    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self, ClassifierError> {
        if probs.is_empty() {
            return Err(ClassifierError::InvalidProbabilities("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(ClassifierError::InvalidProbabilities(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(ClassifierError::InvalidProbabilities(format!("sums to {sum}")));
        }
        Ok(ProbabilityVector(probs))
    }

    /// Softmax of unnormalized log scores, stabilized by log-sum-exp.
    pub fn from_log_scores(scores: &[f64]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        ProbabilityVector(exps.into_iter().map(|e| e / z).collect())
    }

    /// Wraps a vector known to be valid (e.g. a convex combination).
    pub(crate) fn from_trusted(probs: Vec<f64>) -> Self {
        ProbabilityVector(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Anything that turns an input into class posteriors.
pub trait Classifier: Send + Sync {
    fn modality(&self) -> Modality;
    fn classes(&self) -> &[String];
    fn predict_proba(&self, input: &ModelInput) -> Result<ProbabilityVector, ClassifierError>;
}

/// Posteriors for a batch of inputs, in order.
pub fn predict_batch<C: Classifier + ?Sized>(
    model: &C,
    inputs: &[ModelInput],
) -> Result<Vec<ProbabilityVector>, ClassifierError> {
    par::try_map(inputs, |x| model.predict_proba(x))
}

/// How a model's input is derived from a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSpec {
    pub modality: Modality,
    pub task_axis: LabelAxis,
    /// Sequence inputs keep this many leading nucleotides.
    pub max_len: usize,
    pub marker_style: MarkerStyle,
    pub table1_verbatim: bool,
}

impl InputSpec {
    pub const DEFAULT_MAX_LEN: usize = 1000;

    pub fn sequence(task_axis: LabelAxis) -> Self {
        InputSpec {
            modality: Modality::Sequence,
            task_axis,
            max_len: Self::DEFAULT_MAX_LEN,
            marker_style: MarkerStyle::TypedEntityMarkerPunct,
            table1_verbatim: false,
        }
    }

    pub fn text(task_axis: LabelAxis, marker_style: MarkerStyle) -> Self {
        InputSpec { modality: Modality::Text, marker_style, ..InputSpec::sequence(task_axis) }
    }

    /// The sequence prefix, or the record's non-task attributes rendered
    /// in the configured style (empty text when it has none).
    pub fn input_for(&self, rec: &SequenceRecord) -> ModelInput {
        match self.modality {
            Modality::Sequence => ModelInput::Sequence(truncate(&rec.nucleotides, self.max_len).sequence.to_string()),
            Modality::Text => {
                let pairs = pairs_for(&rec.labels, self.task_axis);
                let opts = RenderOptions { table1_verbatim: self.table1_verbatim };
                ModelInput::Text(render(&pairs, self.marker_style, opts).unwrap_or_default())
            }
        }
    }

    pub fn inputs_for(&self, records: &[SequenceRecord]) -> Vec<ModelInput> {
        par::map(records, |r| self.input_for(r))
    }
}

/// Feature map of the softmax baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    KmerFrequency { k: usize },
    BagOfWords,
}

impl FromStr for FeatureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bow" | "bag-of-words" => Ok(FeatureKind::BagOfWords),
            "kmer" | "kmer-frequency" => Ok(FeatureKind::KmerFrequency { k: 6 }),
            other => Err(format!("unknown feature kind '{other}' (kmer|bow)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Naive Bayes only.
    pub laplace_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { seed: 0, learning_rate: 0.5, epochs: 300, l2: 1e-4, laplace_alpha: 1.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ClassifierError::InvalidConfig("l2 must be non-negative".into()));
        }
        if !(self.laplace_alpha > 0.0 && self.laplace_alpha.is_finite()) {
            return Err(ClassifierError::InvalidConfig("laplace alpha must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    NaiveBayes(NaiveBayes),
    Softmax(SoftmaxRegression),
}

/// A trained baseline with its class vocabulary and input recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: InputSpec,
    pub classes: Vec<String>,
    pub kind: ModelKind,
    /// Per-epoch training loss (softmax only; not persisted).
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        TrainedModel::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        model_file::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        model_file::decode(bytes)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::NaiveBayes(_) => "naive-bayes",
            ModelKind::Softmax(_) => "softmax",
        }
    }
}

impl Classifier for TrainedModel {
    fn modality(&self) -> Modality {
        self.spec.modality
    }

    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, input: &ModelInput) -> Result<ProbabilityVector, ClassifierError> {
        if input.modality() != self.spec.modality {
            return Err(ClassifierError::ModalityMismatch { expected: self.spec.modality, got: input.modality() });
        }
        let scores = match &self.kind {
            ModelKind::NaiveBayes(nb) => nb.log_joint(input.payload())?,
            ModelKind::Softmax(sm) => sm.logits(input.payload())?,
        };
        Ok(ProbabilityVector::from_log_scores(&scores))
    }
}

fn check_sequence(seq: &str) -> Result<(), ClassifierError> {
    if crate::seq_io::is_nucleotide_string(seq) {
        Ok(())
    } else {
        Err(ClassifierError::InvalidInput("sequence has characters outside A,C,G,T,N".into()))
    }
}

/// Multinomial naive Bayes over stride-1 k-mer counts with Laplace
/// smoothing `alpha`; priors are empirical class frequencies.
pub fn train_kmer_nb(ds: &Dataset, spec: InputSpec, k: usize, alpha: f64) -> Result<TrainedModel, ClassifierError> {
    if ds.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if spec.modality != Modality::Sequence {
        return Err(ClassifierError::InvalidConfig("naive Bayes baseline takes sequence input".into()));
    }
    if !(1..=12).contains(&k) {
        return Err(ClassifierError::InvalidConfig(format!("k = {k} is outside 1..=12")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ClassifierError::InvalidConfig("laplace alpha must be positive".into()));
    }
    let inputs = spec.inputs_for(ds.records());
    let nb = NaiveBayes::fit(&inputs, ds.class_indices(), ds.class_vocab().len(), k, alpha);
    Ok(TrainedModel { spec, classes: ds.class_vocab().to_vec(), kind: ModelKind::NaiveBayes(nb), loss_history: vec![] })
}

/// Multinomial logistic regression trained by full-batch gradient descent
/// on mean cross-entropy plus `l2·‖W‖²`.
pub fn train_softmax(
    ds: &Dataset,
    spec: InputSpec,
    features: FeatureKind,
    cfg: &TrainConfig,
) -> Result<TrainedModel, ClassifierError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    match (features, spec.modality) {
        (FeatureKind::KmerFrequency { k }, Modality::Sequence) if (1..=8).contains(&k) => {}
        (FeatureKind::KmerFrequency { .. }, Modality::Sequence) => {
            return Err(ClassifierError::InvalidConfig("k-mer frequency features need k in 1..=8".into()))
        }
        (FeatureKind::BagOfWords, Modality::Text) => {}
        _ => return Err(ClassifierError::InvalidConfig("feature kind does not fit the input modality".into())),
    }
    let inputs = spec.inputs_for(ds.records());
    let (model, history) = SoftmaxRegression::fit(&inputs, ds.class_indices(), ds.class_vocab().len(), features, cfg)?;
    Ok(TrainedModel {
        spec,
        classes: ds.class_vocab().to_vec(),
        kind: ModelKind::Softmax(model),
        loss_history: history,
    })
}
