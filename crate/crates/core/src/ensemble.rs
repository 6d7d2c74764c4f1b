//! Weighted soft voting over member posteriors, with weights tuned by an
//! exhaustive grid scan on the validation split.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

use crate::classifiers::{predict_batch, Classifier, ClassifierError, ModelInput, ProbabilityVector};
use crate::metrics::{report, ConfusionMatrix};
use crate::par;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("{probs} posteriors for {weights} weights")]
    LengthMismatch { probs: usize, weights: usize },
    #[error("members disagree on the class vocabulary")]
    VocabMismatch,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid grid step {0}: 1/step must be a whole number")]
    InvalidStep(f64),
    #[error("weights file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Member(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convex weights, one per member.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, EnsembleError> {
        if weights.len() < 2 {
            return Err(EnsembleError::InvalidWeights("need at least two members".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EnsembleError::InvalidWeights("weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(EnsembleWeights(weights))
    }

    /// `(w, 1 - w)`.
    pub fn pair(w1: f64) -> Result<Self, EnsembleError> {
        EnsembleWeights::new(vec![w1, 1.0 - w1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `Σ wᵢ·probsᵢ`.
pub fn soft_vote(probs: &[&ProbabilityVector], w: &EnsembleWeights) -> Result<ProbabilityVector, EnsembleError> {
    if probs.len() != w.0.len() {
        return Err(EnsembleError::LengthMismatch { probs: probs.len(), weights: w.0.len() });
    }
    let n = probs[0].len();
    if probs.iter().any(|p| p.len() != n) {
        return Err(EnsembleError::VocabMismatch);
    }
    let mut out = vec![0.0; n];
    for (p, &wi) in probs.iter().zip(&w.0) {
        for (o, &x) in out.iter_mut().zip(p.as_slice()) {
            *o += wi * x;
        }
    }
    Ok(ProbabilityVector::from_trusted(out))
}

/// Which end of the grid wins when objective values tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Smallest first-member weight.
    #[default]
    FavorSecond,
    /// Largest first-member weight.
    FavorFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneConfig {
    pub step: f64,
    pub tie_break: TieBreak,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { step: 0.05, tie_break: TieBreak::FavorSecond }
    }
}

impl TuneConfig {
    /// First-member weights `i/n` for `i = 0..=n`, `n = 1/step`.
    pub fn grid(&self) -> Result<Vec<f64>, EnsembleError> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(EnsembleError::InvalidStep(self.step));
        }
        let n = (1.0 / self.step).round();
        if (n * self.step - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::InvalidStep(self.step));
        }
        let n = n as usize;
        Ok((0..=n).map(|i| i as f64 / n as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub weights: EnsembleWeights,
    pub objective: f64,
    /// `(w1, objective)` for every grid point, in scan order.
    pub curve: Vec<(f64, f64)>,
}

/// Macro-F1 of the argmax predictions.
pub fn macro_f1_of(posteriors: &[ProbabilityVector], golds: &[usize], classes: &[String]) -> Result<f64, EnsembleError> {
    if golds.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    let preds: Vec<usize> = posteriors.iter().map(ProbabilityVector::argmax).collect();
    let cm = ConfusionMatrix::from_indices(&preds, golds, classes)
        .map_err(|e| EnsembleError::InvalidWeights(e.to_string()))?;
    Ok(report(&cm).map_err(|_| EnsembleError::EmptyValidation)?.macro_f1)
}

/// Grid scan over precomputed validation posteriors of two members.
pub fn tune_from_posteriors(
    first: &[ProbabilityVector],
    second: &[ProbabilityVector],
    golds: &[usize],
    classes: &[String],
    cfg: &TuneConfig,
) -> Result<TuneResult, EnsembleError> {
    if golds.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    if first.len() != golds.len() || second.len() != golds.len() {
        return Err(EnsembleError::LengthMismatch { probs: first.len().min(second.len()), weights: golds.len() });
    }
    if first.iter().chain(second).any(|p| p.len() != classes.len()) {
        return Err(EnsembleError::VocabMismatch);
    }
    let mut grid = cfg.grid()?;
    if cfg.tie_break == TieBreak::FavorFirst {
        grid.reverse();
    }
    let curve = par::try_map(&grid, |&w1| {
        let w = EnsembleWeights::pair(w1)?;
        let voted = first
            .iter()
            .zip(second)
            .map(|(a, b)| soft_vote(&[a, b], &w))
            .collect::<Result<Vec<_>, _>>()?;
        Ok::<_, EnsembleError>((w1, macro_f1_of(&voted, golds, classes)?))
    })?;
    let mut best: Option<(f64, f64)> = None;
    for &(w1, obj) in &curve {
        if best.is_none_or(|(_, b)| obj > b) {
            best = Some((w1, obj));
        }
    }
    let (w1, objective) = best.expect("grid is non-empty");
    Ok(TuneResult { weights: EnsembleWeights::pair(w1)?, objective, curve })
}

fn check_vocab(members: &[&dyn Classifier]) -> Result<(), EnsembleError> {
    let first = members[0].classes();
    if members.iter().any(|m| m.classes() != first) {
        return Err(EnsembleError::VocabMismatch);
    }
    Ok(())
}

/// Computes member posteriors on the validation inputs, then scans the grid.
/// `inputs[i]` holds one input per member for validation item `i`.
pub fn tune_weights(
    members: [&dyn Classifier; 2],
    inputs: &[[ModelInput; 2]],
    golds: &[usize],
    cfg: &TuneConfig,
) -> Result<TuneResult, EnsembleError> {
    if inputs.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    check_vocab(&members)?;
    let a: Vec<ModelInput> = inputs.iter().map(|p| p[0].clone()).collect();
    let b: Vec<ModelInput> = inputs.iter().map(|p| p[1].clone()).collect();
    let pa = predict_batch(members[0], &a)?;
    let pb = predict_batch(members[1], &b)?;
    tune_from_posteriors(&pa, &pb, golds, members[0].classes(), cfg)
}

/// Soft-voted posterior and its argmax (lowest index on ties).
pub fn predict_ensemble(
    members: &[&dyn Classifier],
    w: &EnsembleWeights,
    inputs: &[ModelInput],
) -> Result<(usize, ProbabilityVector), EnsembleError> {
    if members.len() != w.0.len() || inputs.len() != members.len() {
        return Err(EnsembleError::LengthMismatch { probs: inputs.len(), weights: w.0.len() });
    }
    check_vocab(members)?;
    let probs = members
        .iter()
        .zip(inputs)
        .map(|(m, x)| m.predict_proba(x))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&ProbabilityVector> = probs.iter().collect();
    let p = soft_vote(&refs, w)?;
    Ok((p.argmax(), p))
}

/// Persisted tuning outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub members: Vec<String>,
    pub weights: EnsembleWeights,
    pub objective: f64,
    pub step: f64,
    pub val_manifest_hash: String,
}

impl WeightsFile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[String]| v.join(",");
        let ws: Vec<String> = self.weights.0.iter().map(|w| format!("{w:?}")).collect();
        let _ = writeln!(s, "members={}", join(&self.members));
        let _ = writeln!(s, "weights={}", join(&ws));
        let _ = writeln!(s, "objective={:?}", self.objective);
        let _ = writeln!(s, "step={:?}", self.step);
        let _ = writeln!(s, "val_manifest_sha256={}", self.val_manifest_hash);
        s
    }

    pub fn parse(text: &str) -> Result<Self, EnsembleError> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| EnsembleError::Parse { line: i + 1, reason: "expected key=value".into() })?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| EnsembleError::Parse { line: 0, reason: format!("missing key '{k}'") });
        let num = |k: &str| -> Result<f64, EnsembleError> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| EnsembleError::Parse { line: *line, reason: format!("bad number '{v}'") })
        };
        let members: Vec<String> = get("members")?.1.split(',').map(str::to_string).collect();
        let (wl, wv) = get("weights")?;
        let weights = wv
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| EnsembleError::Parse { line: *wl, reason: "bad weight list".into() })?;
        if weights.len() != members.len() {
            return Err(EnsembleError::Parse { line: *wl, reason: "one weight per member expected".into() });
        }
        Ok(WeightsFile {
            members,
            weights: EnsembleWeights::new(weights)?,
            objective: num("objective")?,
            step: num("step")?,
            val_manifest_hash: get("val_manifest_sha256")?.1.clone(),
        })
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, EnsembleError> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        WeightsFile::parse(&s)
    }
}
