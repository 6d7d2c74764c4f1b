//! Labeled datasets: merging, rare-class filtering and the seeded
//! train/test/validation split.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ontology::{apply_mapping, ClassMapping};
use crate::rng::mix_keys;
use crate::seq_io::{self, is_nucleotide_string, LabelAxis, LabelSet, SequenceRecord, SourceDb};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate record id '{0}'")]
    DuplicateId(String),
    #[error("record '{id}' has no {axis} label")]
    MissingLabel { id: String, axis: LabelAxis },
    #[error("record '{0}' has nucleotides outside A,C,G,T,N")]
    InvalidSequence(String),
    #[error("datasets are on different task axes ({0} vs {1})")]
    AxisMismatch(LabelAxis, LabelAxis),
    #[error("no records left after filtering")]
    EmptyResult,
    #[error("class '{class}' has {count} record(s); stratified splitting needs at least 3")]
    TooFewPerClass { class: String, count: usize },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("record '{0}' is not in the dataset")]
    UnknownRecord(String),
    #[error(transparent)]
    SeqIo(#[from] seq_io::SeqIoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Records with labels, viewed along one task axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SequenceRecord>,
    task_axis: LabelAxis,
    class_vocab: Vec<String>,
    class_of: Vec<usize>,
}

impl Dataset {
    /// Every record must carry a label on `task_axis`; ids must be unique.
    pub fn new(records: Vec<SequenceRecord>, task_axis: LabelAxis) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.id.is_empty() || !seen.insert(r.id.as_str()) {
                return Err(DatasetError::DuplicateId(r.id.clone()));
            }
            if r.labels.get(task_axis).is_none() {
                return Err(DatasetError::MissingLabel { id: r.id.clone(), axis: task_axis });
            }
            if !is_nucleotide_string(&r.nucleotides) {
                return Err(DatasetError::InvalidSequence(r.id.clone()));
            }
        }
        let class_vocab: Vec<String> = records
            .iter()
            .filter_map(|r| r.labels.get(task_axis))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        let index: HashMap<&str, usize> = class_vocab.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let class_of = records.iter().map(|r| index[r.labels.get(task_axis).expect("checked")]).collect();
        Ok(Dataset { records, task_axis, class_vocab, class_of })
    }

    /// Like [`Dataset::new`] but drops records without a task label instead
    /// of failing. Returns the number dropped.
    pub fn from_labeled(records: Vec<SequenceRecord>, task_axis: LabelAxis) -> Result<(Self, usize), DatasetError> {
        let before = records.len();
        let kept: Vec<_> = records.into_iter().filter(|r| r.labels.get(task_axis).is_some()).collect();
        let dropped = before - kept.len();
        Ok((Dataset::new(kept, task_axis)?, dropped))
    }

    /// Same task axis, new records.
    pub fn with_records(&self, records: Vec<SequenceRecord>) -> Result<Self, DatasetError> {
        Dataset::new(records, self.task_axis)
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SequenceRecord> {
        self.records
    }

    pub fn task_axis(&self) -> LabelAxis {
        self.task_axis
    }

    /// Sorted distinct task labels; a class's index is its position here.
    pub fn class_vocab(&self) -> &[String] {
        &self.class_vocab
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Class index of the record at position `i`.
    pub fn class_index(&self, i: usize) -> usize {
        self.class_of[i]
    }

    pub fn class_indices(&self) -> &[usize] {
        &self.class_of
    }

    pub fn label(&self, i: usize) -> &str {
        &self.class_vocab[self.class_of[i]]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_vocab.len()];
        for &c in &self.class_of {
            counts[c] += 1;
        }
        counts
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// Positions of the records assigned to `bucket`, in dataset order.
    pub fn positions_in(&self, manifest: &SplitManifest, bucket: Bucket) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| manifest.bucket_of(&self.records[i].id) == Some(bucket)).collect()
    }

    /// Sub-dataset of one bucket.
    pub fn select(&self, manifest: &SplitManifest, bucket: Bucket) -> Result<Dataset, DatasetError> {
        let recs = self.positions_in(manifest, bucket).into_iter().map(|i| self.records[i].clone()).collect();
        self.with_records(recs)
    }

    /// Restricts the dataset to the ids present in a manifest.
    pub fn restrict_to(&self, manifest: &SplitManifest) -> Result<Dataset, DatasetError> {
        let recs = self.records.iter().filter(|r| manifest.bucket_of(&r.id).is_some()).cloned().collect();
        self.with_records(recs)
    }
}

/// Union of two databases after applying the label mappings to both.
/// Records with identical sequence and identical integrated labels are
/// deduplicated (first occurrence kept).
pub fn merge(card: &Dataset, megares: &Dataset, mappings: &[ClassMapping]) -> Result<Dataset, DatasetError> {
    if card.task_axis != megares.task_axis {
        return Err(DatasetError::AxisMismatch(card.task_axis, megares.task_axis));
    }
    let mapped = |ds: &Dataset| mappings.iter().fold(ds.clone(), |acc, m| apply_mapping(&acc, m));
    let (a, b) = (mapped(card), mapped(megares));
    let mut seen: HashSet<(String, LabelSet)> = HashSet::new();
    let mut out = Vec::with_capacity(a.len() + b.len());
    for rec in a.records.into_iter().chain(b.records) {
        if seen.insert((rec.nucleotides.clone(), rec.labels.clone())) {
            out.push(rec);
        }
    }
    Dataset::new(out, card.task_axis)
}

/// Removes all records of classes with fewer than `min_samples` records.
pub fn filter_rare_classes(ds: &Dataset, min_samples: usize) -> Result<Dataset, DatasetError> {
    let counts = ds.class_counts();
    let kept: Vec<SequenceRecord> = ds
        .records
        .iter()
        .zip(&ds.class_of)
        .filter(|(_, &c)| counts[c] >= min_samples)
        .map(|(r, _)| r.clone())
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::EmptyResult);
    }
    ds.with_records(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bucket {
    Train,
    Test,
    Val,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Train, Bucket::Test, Bucket::Val];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Train => "TRAIN",
            Bucket::Test => "TEST",
            Bucket::Val => "VAL",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TRAIN" => Ok(Bucket::Train),
            "TEST" => Ok(Bucket::Test),
            "VAL" | "VALIDATION" => Ok(Bucket::Val),
            other => Err(format!("unknown bucket '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Fractions { train: 0.75, test: 0.20, val: 0.05 }
    }
}

impl Fractions {
    pub fn new(train: f64, test: f64, val: f64) -> Result<Self, DatasetError> {
        let f = Fractions { train, test, val };
        let arr = f.as_array();
        if arr.iter().any(|x| !x.is_finite() || *x < 0.0) || (arr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadFractions(arr));
        }
        Ok(f)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.test, self.val]
    }
}

/// Bucket sizes for `n` items: floors of `n·fraction`, then the leftover
/// items go one each to the buckets with the largest fractional parts, ties
/// in TRAIN, TEST, VAL order.
pub fn allocate(n: usize, fractions: &Fractions) -> [usize; 3] {
    let exact = fractions.as_array().map(|f| n as f64 * f);
    let mut counts = exact.map(|x| x.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut leftover = n.saturating_sub(assigned);
    let mut order = [0usize, 1, 2];
    // Stable sort keeps TRAIN > TEST > VAL priority among equal remainders.
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).expect("finite")
    });
    for &b in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[b] += 1;
        leftover -= 1;
    }
    counts
}

/// Record → bucket assignment with the seed and fractions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub fractions: Fractions,
    pub stratified: bool,
    assignment: BTreeMap<String, Bucket>,
}

impl SplitManifest {
    pub fn from_assignment(
        seed: u64,
        fractions: Fractions,
        stratified: bool,
        assignment: BTreeMap<String, Bucket>,
    ) -> Self {
        SplitManifest { seed, fractions, stratified, assignment }
    }

    pub fn bucket_of(&self, id: &str) -> Option<Bucket> {
        self.assignment.get(id).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<String, Bucket> {
        &self.assignment
    }

    pub fn ids_in(&self, bucket: Bucket) -> impl Iterator<Item = &str> {
        self.assignment.iter().filter(move |(_, b)| **b == bucket).map(|(id, _)| id.as_str())
    }

    pub fn count(&self, bucket: Bucket) -> usize {
        self.ids_in(bucket).count()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Adds a record to TRAIN. Existing assignments are never changed.
    pub fn assign_train(&mut self, id: &str) -> bool {
        if self.assignment.contains_key(id) {
            return false;
        }
        self.assignment.insert(id.to_string(), Bucket::Train);
        true
    }

    /// Tab-separated: a `#` header with seed and fractions, then
    /// `record_id<TAB>bucket` sorted by id.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let f = self.fractions;
        writeln!(
            out,
            "# seed={}\tfractions={},{},{}\tstratified={}",
            self.seed, f.train, f.test, f.val, self.stratified
        )?;
        for (id, b) in &self.assignment {
            writeln!(out, "{id}\t{b}")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Hex SHA-256 of the serialized manifest.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, DatasetError> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, reason: &str| DatasetError::Parse { line, reason: reason.to_string() };
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty manifest"))?;
        let header = header?;
        let header = header.strip_prefix("# ").ok_or_else(|| parse_err(1, "missing '# seed=...' header"))?;
        let mut seed = None;
        let mut fractions = None;
        let mut stratified = true;
        for field in header.split('\t') {
            let (k, v) = field.split_once('=').ok_or_else(|| parse_err(1, "bad header field"))?;
            match k {
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| parse_err(1, "bad seed"))?),
                "fractions" => {
                    let parts: Vec<f64> = v
                        .split(',')
                        .map(|p| p.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| parse_err(1, "bad fractions"))?;
                    if parts.len() != 3 {
                        return Err(parse_err(1, "expected three fractions"));
                    }
                    fractions = Some(Fractions::new(parts[0], parts[1], parts[2])?);
                }
                "stratified" => stratified = v.parse().map_err(|_| parse_err(1, "bad stratified flag"))?,
                _ => return Err(parse_err(1, "unknown header field")),
            }
        }
        let mut assignment = BTreeMap::new();
        for (idx, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (id, b) = line.split_once('\t').ok_or_else(|| parse_err(idx + 1, "expected id<TAB>bucket"))?;
            let bucket = b.parse::<Bucket>().map_err(|e| parse_err(idx + 1, &e))?;
            if assignment.insert(id.to_string(), bucket).is_some() {
                return Err(DatasetError::DuplicateId(id.to_string()));
            }
        }
        Ok(SplitManifest {
            seed: seed.ok_or_else(|| parse_err(1, "missing seed"))?,
            fractions: fractions.ok_or_else(|| parse_err(1, "missing fractions"))?,
            stratified,
            assignment,
        })
    }
}

/// Group index used for the unstratified split.
const WHOLE_DATASET: u64 = u64::MAX;

/// Seeded split. Within each class (or the whole dataset when not
/// stratified), ids are sorted, ordered by a SplitMix key of
/// `(seed, class index, position)`, and cut into [`allocate`]d buckets.
pub fn split(ds: &Dataset, seed: u64, fractions: Fractions, stratified: bool) -> Result<SplitManifest, DatasetError> {
    let mut groups: Vec<(u64, Vec<&str>)> = if stratified {
        let mut per_class: Vec<Vec<&str>> = vec![Vec::new(); ds.class_vocab.len()];
        for (r, &c) in ds.records.iter().zip(&ds.class_of) {
            per_class[c].push(&r.id);
        }
        for (c, ids) in per_class.iter().enumerate() {
            if ids.len() < 3 {
                return Err(DatasetError::TooFewPerClass { class: ds.class_vocab[c].clone(), count: ids.len() });
            }
        }
        per_class.into_iter().enumerate().map(|(c, ids)| (c as u64, ids)).collect()
    } else {
        vec![(WHOLE_DATASET, ds.records.iter().map(|r| r.id.as_str()).collect())]
    };

    let mut assignment = BTreeMap::new();
    for (group, ids) in groups.iter_mut() {
        ids.sort_unstable();
        let mut keyed: Vec<(u64, usize, &str)> =
            ids.iter().enumerate().map(|(i, id)| (mix_keys(&[seed, *group, i as u64]), i, *id)).collect();
        keyed.sort_unstable();
        let [n_train, n_test, _] = allocate(keyed.len(), &fractions);
        for (pos, (_, _, id)) in keyed.into_iter().enumerate() {
            let bucket = if pos < n_train {
                Bucket::Train
            } else if pos < n_train + n_test {
                Bucket::Test
            } else {
                Bucket::Val
            };
            assignment.insert(id.to_string(), bucket);
        }
    }
    Ok(SplitManifest { seed, fractions, stratified, assignment })
}

const LABEL_COLUMNS: &str = "#id\tsource_db\tdrug_class\tgene_family\tresistance_mechanism\theader";

/// Writes records as FASTA (`>id`) plus a tab-separated label sidecar.
pub fn write_records<W1: Write, W2: Write>(
    records: &[SequenceRecord],
    fasta: W1,
    mut labels: W2,
) -> std::io::Result<()> {
    seq_io::write_fasta(fasta, records.iter().map(|r| (r.id.as_str(), r.nucleotides.as_str())), 80)?;
    writeln!(labels, "{LABEL_COLUMNS}")?;
    for r in records {
        let l = |a| r.labels.get(a).unwrap_or("");
        writeln!(
            labels,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.id,
            r.source_db,
            l(LabelAxis::DrugClass),
            l(LabelAxis::GeneFamily),
            l(LabelAxis::Mechanism),
            r.header.replace(['\t', '\n'], " ")
        )?;
    }
    Ok(())
}

/// Reads records written by [`write_records`]. Records present in only one
/// of the two files are an error.
pub fn read_records<R1: BufRead, R2: BufRead>(fasta: R1, labels: R2) -> Result<Vec<SequenceRecord>, DatasetError> {
    let mut meta: HashMap<String, (SourceDb, LabelSet, String)> = HashMap::new();
    for (idx, line) in labels.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(DatasetError::Parse { line: idx + 1, reason: format!("expected 6 columns, found {}", cols.len()) });
        }
        let source = cols[1].parse::<SourceDb>().map_err(|reason| DatasetError::Parse { line: idx + 1, reason })?;
        let mut ls = LabelSet::default();
        ls.set(LabelAxis::DrugClass, Some(cols[2].to_string()));
        ls.set(LabelAxis::GeneFamily, Some(cols[3].to_string()));
        ls.set(LabelAxis::Mechanism, Some(cols[4].to_string()));
        if meta.insert(cols[0].to_string(), (source, ls, cols[5].to_string())).is_some() {
            return Err(DatasetError::DuplicateId(cols[0].to_string()));
        }
    }
    let mut out = Vec::new();
    for entry in seq_io::parse_fasta_allow_empty(fasta)? {
        let (source_db, labels, header) =
            meta.remove(&entry.header).ok_or_else(|| DatasetError::UnknownRecord(entry.header.clone()))?;
        out.push(SequenceRecord { id: entry.header, header, nucleotides: entry.sequence, source_db, labels });
    }
    if let Some(id) = meta.into_keys().min() {
        return Err(DatasetError::UnknownRecord(id));
    }
    Ok(out)
}
