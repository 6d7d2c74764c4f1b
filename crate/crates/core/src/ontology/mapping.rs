//! Raw → integrated label tables and their application to datasets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use super::{normalize_label, OntologyError, OntologyGraph, OntologyLookup};
use crate::dataset::Dataset;
use crate::seq_io::LabelAxis;

/// Default resistance-mechanism table (six integrated categories).
pub const DEFAULT_MECHANISM_TABLE: &str = include_str!("../../data/mechanism_table.tsv");
/// Default drug-class table (nine integrated classes).
pub const DEFAULT_DRUG_CLASS_TABLE: &str = include_str!("../../data/drug_class_table.tsv");

/// Integrated label used by [`UnmappedPolicy::OtherBucket`].
pub const OTHER_BUCKET: &str = "OTHER";

/// What happens to raw labels the mapping does not cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnmappedPolicy {
    /// Records carrying the label are removed.
    Drop,
    KeepRaw,
    /// Mapped to [`OTHER_BUCKET`].
    OtherBucket,
}

impl FromStr for UnmappedPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "drop" => Ok(UnmappedPolicy::Drop),
            "keep-raw" | "keep" => Ok(UnmappedPolicy::KeepRaw),
            "other" | "other-bucket" => Ok(UnmappedPolicy::OtherBucket),
            other => Err(format!("unknown unmapped policy '{other}' (drop|keep-raw|other)")),
        }
    }
}

impl fmt::Display for UnmappedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnmappedPolicy::Drop => "drop",
            UnmappedPolicy::KeepRaw => "keep-raw",
            UnmappedPolicy::OtherBucket => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMapping {
    pub axis: LabelAxis,
    pub raw_to_integrated: BTreeMap<String, String>,
    pub unmapped_policy: UnmappedPolicy,
    normalized: HashMap<String, String>,
}

/// One line of a mapping audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingAudit {
    pub axis: LabelAxis,
    pub raw: String,
    /// `None` when the policy drops the label.
    pub integrated: Option<String>,
    pub mapped: bool,
}

impl ClassMapping {
    pub fn new(axis: LabelAxis, raw_to_integrated: BTreeMap<String, String>, unmapped_policy: UnmappedPolicy) -> Self {
        let normalized = raw_to_integrated.iter().map(|(k, v)| (normalize_label(k), v.clone())).collect();
        ClassMapping { axis, raw_to_integrated, unmapped_policy, normalized }
    }

    pub fn identity(axis: LabelAxis, labels: impl IntoIterator<Item = String>) -> Self {
        ClassMapping::new(axis, labels.into_iter().map(|l| (l.clone(), l)).collect(), UnmappedPolicy::KeepRaw)
    }

    /// Reads a `raw<TAB>integrated` table. Two raw labels that normalize to
    /// the same key must agree on their target.
    pub fn from_table<R: BufRead>(axis: LabelAxis, reader: R, policy: UnmappedPolicy) -> Result<Self, OntologyError> {
        let mut map = BTreeMap::new();
        let mut by_norm: HashMap<String, String> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (raw, integrated) = line.split_once('\t').ok_or_else(|| OntologyError::ParseError {
                line: idx + 1,
                reason: "expected raw_label<TAB>integrated_label".into(),
            })?;
            let (raw, integrated) = (raw.trim(), integrated.trim());
            if raw.is_empty() || integrated.is_empty() || integrated.contains('\t') {
                return Err(OntologyError::ParseError { line: idx + 1, reason: "empty or extra column".into() });
            }
            if let Some(prev) = by_norm.insert(normalize_label(raw), integrated.to_string()) {
                if prev != integrated {
                    return Err(OntologyError::ParseError {
                        line: idx + 1,
                        reason: format!("'{raw}' maps to both '{prev}' and '{integrated}'"),
                    });
                }
            }
            map.insert(raw.to_string(), integrated.to_string());
        }
        Ok(ClassMapping::new(axis, map, policy))
    }

    pub fn default_mechanism(policy: UnmappedPolicy) -> Self {
        ClassMapping::from_table(LabelAxis::Mechanism, DEFAULT_MECHANISM_TABLE.as_bytes(), policy)
            .expect("built-in mechanism table parses")
    }

    pub fn default_drug_class(policy: UnmappedPolicy) -> Self {
        ClassMapping::from_table(LabelAxis::DrugClass, DEFAULT_DRUG_CLASS_TABLE.as_bytes(), policy)
            .expect("built-in drug-class table parses")
    }

    /// Explicit table entry: exact key first, then normalized key.
    pub fn lookup(&self, raw: &str) -> Option<&str> {
        self.raw_to_integrated
            .get(raw)
            .or_else(|| self.normalized.get(&normalize_label(raw)))
            .map(String::as_str)
    }

    /// Integrated label after applying the unmapped policy; `None` = drop.
    pub fn integrate(&self, raw: &str) -> Option<String> {
        match self.lookup(raw) {
            Some(v) => Some(v.to_string()),
            None => match self.unmapped_policy {
                UnmappedPolicy::Drop => None,
                UnmappedPolicy::KeepRaw => Some(raw.to_string()),
                UnmappedPolicy::OtherBucket => Some(OTHER_BUCKET.to_string()),
            },
        }
    }

    /// Distinct integrated values of the explicit table.
    pub fn integrated_classes(&self) -> BTreeSet<&str> {
        self.raw_to_integrated.values().map(String::as_str).collect()
    }

    pub fn audit<'a>(&self, raw_labels: impl IntoIterator<Item = &'a str>) -> Vec<MappingAudit> {
        let unique: BTreeSet<&str> = raw_labels.into_iter().collect();
        unique
            .into_iter()
            .map(|raw| MappingAudit {
                axis: self.axis,
                raw: raw.to_string(),
                integrated: self.integrate(raw),
                mapped: self.lookup(raw).is_some(),
            })
            .collect()
    }
}

/// Maps gene-family labels to the name of their ontology ancestor at
/// `level`. Labels that do not resolve to a term in `graph` are handled by
/// `policy`: recorded as `OTHER` or as themselves, or left out (drop).
pub fn build_gene_family_mapping<'a, L: OntologyLookup + ?Sized>(
    raw_labels: impl IntoIterator<Item = &'a str>,
    graph: &OntologyGraph,
    lookup: &L,
    level: usize,
    policy: UnmappedPolicy,
) -> Result<ClassMapping, OntologyError> {
    let mut map = BTreeMap::new();
    let unique: BTreeSet<&str> = raw_labels.into_iter().collect();
    for raw in unique {
        let term_id = lookup.resolve(raw)?.filter(|id| {
            let known = graph.term(id).is_some();
            if !known {
                log::warn!("label '{raw}' resolved to '{id}', which is not in the loaded ontology");
            }
            known
        });
        let integrated = match term_id {
            Some(id) => {
                let anc = graph.ancestor_at_level(&id, level)?;
                Some(graph.term(anc).expect("ancestor exists").name.clone())
            }
            None => match policy {
                UnmappedPolicy::Drop => None,
                UnmappedPolicy::KeepRaw => Some(raw.to_string()),
                UnmappedPolicy::OtherBucket => Some(OTHER_BUCKET.to_string()),
            },
        };
        if let Some(v) = integrated {
            map.insert(raw.to_string(), v);
        }
    }
    Ok(ClassMapping::new(LabelAxis::GeneFamily, map, policy))
}

/// Replaces every label on the mapping's axis by its integrated label.
/// Under [`UnmappedPolicy::Drop`] records with unmapped labels are removed.
pub fn apply_mapping(ds: &Dataset, mapping: &ClassMapping) -> Dataset {
    let mut records = Vec::with_capacity(ds.len());
    for rec in ds.records() {
        let mut rec = rec.clone();
        if let Some(raw) = rec.labels.get(mapping.axis) {
            match mapping.integrate(raw) {
                Some(v) => rec.labels.set(mapping.axis, Some(v)),
                None => continue,
            }
        }
        records.push(rec);
    }
    ds.with_records(records).expect("mapping keeps ids unique and task labels present")
}
