//! Rare-class augmentation: planning, prompt construction and validated
//! ingestion of generated samples into the TRAIN bucket.

use std::collections::HashSet;
use std::io::Write;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{InputSpec, Modality, ModelInput};
use crate::dataset::{Bucket, Dataset, DatasetError, SplitManifest};
use crate::rng::fnv1a64;
use crate::seq_io::{is_nucleotide_string, LabelAxis, LabelSet, SequenceRecord, SourceDb};
use crate::text_format::parse_rendered;

pub const DEFAULT_THRESHOLD: usize = 15;
pub const DEFAULT_TARGET: usize = 15;
pub const MAX_EXEMPLARS: usize = 5;
pub const MIN_SEQ_LEN: usize = 50;
pub const MAX_SEQ_LEN: usize = 1000;
pub const DEFAULT_TEMPLATE: &str = "Generate a {class} gene like:\n{exemplars}";

#[derive(Debug, Error)]
pub enum AugmentationError {
    #[error("threshold must be at least 1")]
    BadThreshold,
    #[error("bad template: {0}")]
    BadTemplate(String),
    #[error("class '{0}' is not in the dataset")]
    UnknownClass(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub class: String,
    pub current_count: usize,
    pub target_count: usize,
    pub exemplar_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationPlan {
    pub entries: Vec<PlanEntry>,
    pub threshold: usize,
    pub template_id: String,
}

/// One entry per class whose TRAIN count is below `threshold`, with up to
/// [`MAX_EXEMPLARS`] lowest-id TRAIN exemplars.
pub fn plan(
    ds: &Dataset,
    manifest: &SplitManifest,
    threshold: usize,
    target: usize,
    template_id: &str,
) -> Result<AugmentationPlan, AugmentationError> {
    if threshold == 0 {
        return Err(AugmentationError::BadThreshold);
    }
    let mut per_class: Vec<Vec<&str>> = vec![Vec::new(); ds.class_vocab().len()];
    for (i, r) in ds.records().iter().enumerate() {
        if manifest.bucket_of(&r.id) == Some(Bucket::Train) {
            per_class[ds.class_index(i)].push(&r.id);
        }
    }
    let mut entries = Vec::new();
    for (class, mut ids) in ds.class_vocab().iter().zip(per_class) {
        if ids.len() >= threshold {
            continue;
        }
        ids.sort_unstable();
        entries.push(PlanEntry {
            class: class.clone(),
            current_count: ids.len(),
            target_count: target.max(ids.len()),
            exemplar_ids: ids.iter().take(MAX_EXEMPLARS).map(|s| s.to_string()).collect(),
        });
    }
    Ok(AugmentationPlan { entries, threshold, template_id: template_id.to_string() })
}

/// Substitutes `{class}` and `{exemplars}` (newline-joined). Any other
/// brace group is rejected.
pub fn build_prompt(template: &str, class: &str, exemplars: &[&str]) -> Result<String, AugmentationError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| AugmentationError::BadTemplate("unclosed '{'".into()))?;
        match &after[..close] {
            "class" => out.push_str(class),
            "exemplars" => out.push_str(&exemplars.join("\n")),
            other => return Err(AugmentationError::BadTemplate(format!("unknown placeholder {{{other}}}"))),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Prompt for a plan entry, using the entry's exemplars as model inputs.
pub fn prompt_for(entry: &PlanEntry, ds: &Dataset, spec: &InputSpec, template: &str) -> Result<String, AugmentationError> {
    let payloads: Vec<String> = entry
        .exemplar_ids
        .iter()
        .filter_map(|id| ds.position(id))
        .map(|i| spec.input_for(&ds.records()[i]).payload().to_string())
        .collect();
    let refs: Vec<&str> = payloads.iter().map(String::as_str).collect();
    build_prompt(template, &entry.class, &refs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Alphabet,
    TooShort,
    TooLong,
    Unparseable,
    Duplicate,
    Cap,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Alphabet => "alphabet",
            RejectReason::TooShort => "too-short",
            RejectReason::TooLong => "too-long",
            RejectReason::Unparseable => "unparseable",
            RejectReason::Duplicate => "duplicate",
            RejectReason::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub endpoint: String,
    pub prompt_hash: String,
    pub timestamp: u64,
}

impl Provenance {
    pub fn new(endpoint: &str, prompt: &str, timestamp: u64) -> Self {
        Provenance { endpoint: endpoint.to_string(), prompt_hash: sha256_hex(prompt), timestamp }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedSample {
    pub payload: String,
    pub class: String,
    pub provenance: Provenance,
    /// `None` when accepted.
    pub rejection: Option<RejectReason>,
    /// Id of the appended record, when accepted.
    pub record_id: Option<String>,
}

impl AugmentedSample {
    pub fn accepted(&self) -> bool {
        self.rejection.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub manifest: SplitManifest,
    pub audit: Vec<AugmentedSample>,
}

fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn check_sequence(c: &str) -> Result<(), RejectReason> {
    if !is_nucleotide_string(c) {
        Err(RejectReason::Alphabet)
    } else if c.len() < MIN_SEQ_LEN {
        Err(RejectReason::TooShort)
    } else if c.len() > MAX_SEQ_LEN {
        Err(RejectReason::TooLong)
    } else {
        Ok(())
    }
}

fn text_labels(c: &str, axis: LabelAxis, class: &str) -> Result<LabelSet, RejectReason> {
    let pairs = parse_rendered(c);
    if pairs.is_empty() {
        return Err(RejectReason::Unparseable);
    }
    let mut labels = LabelSet::default();
    for p in pairs {
        match LabelAxis::from_attribute_name(&p.attribute_name) {
            Some(a) if a != axis => labels.set(a, Some(p.value)),
            _ => return Err(RejectReason::Unparseable),
        }
    }
    labels.set(axis, Some(class.to_string()));
    Ok(labels)
}

/// Validates candidates in order (alphabet and length, or parseability for
/// text; duplicates; per-class cap) and appends the accepted ones to the
/// dataset as AUGMENTED records assigned to TRAIN.
pub fn ingest(
    candidates: &[String],
    class: &str,
    target_count: usize,
    spec: &InputSpec,
    ds: &Dataset,
    manifest: &SplitManifest,
    provenance: &Provenance,
) -> Result<IngestOutcome, AugmentationError> {
    let class_idx = ds
        .class_vocab()
        .iter()
        .position(|c| c == class)
        .ok_or_else(|| AugmentationError::UnknownClass(class.to_string()))?;
    let axis = ds.task_axis();
    let current = ds
        .records()
        .iter()
        .enumerate()
        .filter(|(i, r)| ds.class_index(*i) == class_idx && manifest.bucket_of(&r.id) == Some(Bucket::Train))
        .count();
    let room = target_count.saturating_sub(current);
    let mut seen: HashSet<String> = ds.records().iter().map(|r| spec.input_for(r).payload().to_string()).collect();
    let mut ids: HashSet<String> = ds.records().iter().map(|r| r.id.clone()).collect();
    let mut records = ds.records().to_vec();
    let mut manifest = manifest.clone();
    let mut audit = Vec::with_capacity(candidates.len());
    let mut accepted = 0;
    for raw in candidates {
        let payload = match spec.modality {
            Modality::Sequence => raw.trim().to_ascii_uppercase(),
            Modality::Text => raw.trim().to_string(),
        };
        let verdict = match spec.modality {
            Modality::Sequence => check_sequence(&payload).map(|_| {
                let mut l = LabelSet::default();
                l.set(axis, Some(class.to_string()));
                l
            }),
            Modality::Text => text_labels(&payload, axis, class),
        };
        let verdict = verdict.and_then(|labels| {
            let canonical = match spec.modality {
                Modality::Sequence => payload.clone(),
                Modality::Text => {
                    let probe = SequenceRecord {
                        id: String::new(),
                        header: String::new(),
                        nucleotides: String::new(),
                        source_db: SourceDb::Augmented,
                        labels: labels.clone(),
                    };
                    match spec.input_for(&probe) {
                        ModelInput::Text(t) | ModelInput::Sequence(t) => t,
                    }
                }
            };
            if seen.contains(&canonical) || seen.contains(&payload) {
                Err(RejectReason::Duplicate)
            } else if accepted >= room {
                Err(RejectReason::Cap)
            } else {
                seen.insert(canonical);
                seen.insert(payload.clone());
                Ok(labels)
            }
        });
        let rejection = verdict.as_ref().err().copied();
        let record_id = match verdict {
            Ok(labels) => {
                let mut id = format!("aug_{:016x}", fnv1a64(payload.as_bytes()));
                let mut salt = 0u32;
                while ids.contains(&id) {
                    salt += 1;
                    id = format!("aug_{:016x}_{salt}", fnv1a64(payload.as_bytes()));
                }
                ids.insert(id.clone());
                records.push(SequenceRecord {
                    id: id.clone(),
                    header: id.clone(),
                    nucleotides: if spec.modality == Modality::Sequence { payload.clone() } else { String::new() },
                    source_db: SourceDb::Augmented,
                    labels,
                });
                manifest.assign_train(&id);
                accepted += 1;
                Some(id)
            }
            Err(_) => None,
        };
        audit.push(AugmentedSample {
            payload,
            class: class.to_string(),
            provenance: provenance.clone(),
            rejection,
            record_id,
        });
    }
    Ok(IngestOutcome { dataset: ds.with_records(records)?, manifest, audit })
}

/// Tab-separated audit lines: class, accepted flag, reason, prompt hash,
/// payload hash, endpoint, timestamp.
pub fn write_audit<W: Write>(mut out: W, samples: &[AugmentedSample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.class,
            s.accepted(),
            s.rejection.map_or("-", RejectReason::as_str),
            s.provenance.prompt_hash,
            sha256_hex(&s.payload),
            s.provenance.endpoint,
            s.provenance.timestamp
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_substitution() {
        assert_eq!(build_prompt(DEFAULT_TEMPLATE, "B", &["ACGT"]).unwrap(), "Generate a B gene like:\nACGT");
        assert_eq!(build_prompt(DEFAULT_TEMPLATE, "B", &[]).unwrap(), "Generate a B gene like:\n");
        assert_eq!(build_prompt("{exemplars}", "B", &["A", "C"]).unwrap(), "A\nC");
        assert!(matches!(build_prompt("x {unknown}", "B", &[]), Err(AugmentationError::BadTemplate(_))));
        assert!(matches!(build_prompt("x {class", "B", &[]), Err(AugmentationError::BadTemplate(_))));
    }
}
