//! FASTA parsing, header label extraction and sequence normalization.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqIoError {
    #[error("malformed FASTA at line {line}: {reason}")]
    MalformedFasta { line: usize, reason: String },
    #[error("header does not match schema '{schema}': {reason}")]
    HeaderMismatch { schema: String, reason: String },
    #[error("invalid header schema: {0}")]
    InvalidSchema(String),
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("duplicate record id '{0}'")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Database a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceDb {
    Card,
    Megares,
    Augmented,
    Simulated,
}

impl fmt::Display for SourceDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceDb::Card => "CARD",
            SourceDb::Megares => "MEGARES",
            SourceDb::Augmented => "AUGMENTED",
            SourceDb::Simulated => "SIMULATED",
        })
    }
}

impl FromStr for SourceDb {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CARD" => Ok(SourceDb::Card),
            "MEGARES" => Ok(SourceDb::Megares),
            "AUGMENTED" => Ok(SourceDb::Augmented),
            "SIMULATED" => Ok(SourceDb::Simulated),
            other => Err(format!("unknown source database '{other}'")),
        }
    }
}

/// One of the three label axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelAxis {
    DrugClass,
    GeneFamily,
    Mechanism,
}

impl LabelAxis {
    pub const ALL: [LabelAxis; 3] = [LabelAxis::DrugClass, LabelAxis::GeneFamily, LabelAxis::Mechanism];

    /// Human-readable attribute name, as used in rendered text inputs.
    pub fn attribute_name(self) -> &'static str {
        match self {
            LabelAxis::DrugClass => "Drug Class",
            LabelAxis::GeneFamily => "Gene Family",
            LabelAxis::Mechanism => "Resistance Mechanism",
        }
    }

    pub fn from_attribute_name(name: &str) -> Option<LabelAxis> {
        LabelAxis::ALL.into_iter().find(|a| a.attribute_name().eq_ignore_ascii_case(name.trim()))
    }

    /// Short command-line spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            LabelAxis::DrugClass => "drug-class",
            LabelAxis::GeneFamily => "gene-family",
            LabelAxis::Mechanism => "mechanism",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            LabelAxis::DrugClass => 0,
            LabelAxis::GeneFamily => 1,
            LabelAxis::Mechanism => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<LabelAxis> {
        LabelAxis::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for LabelAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "drug-class" | "drugclass" => Ok(LabelAxis::DrugClass),
            "gene-family" | "genefamily" => Ok(LabelAxis::GeneFamily),
            "mechanism" | "resistance-mechanism" => Ok(LabelAxis::Mechanism),
            other => Err(format!("unknown label axis '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LabelSet {
    pub drug_class: Option<String>,
    pub gene_family: Option<String>,
    pub resistance_mechanism: Option<String>,
}

impl LabelSet {
    pub fn get(&self, axis: LabelAxis) -> Option<&str> {
        match axis {
            LabelAxis::DrugClass => self.drug_class.as_deref(),
            LabelAxis::GeneFamily => self.gene_family.as_deref(),
            LabelAxis::Mechanism => self.resistance_mechanism.as_deref(),
        }
    }

    pub fn set(&mut self, axis: LabelAxis, value: Option<String>) {
        let slot = match axis {
            LabelAxis::DrugClass => &mut self.drug_class,
            LabelAxis::GeneFamily => &mut self.gene_family,
            LabelAxis::Mechanism => &mut self.resistance_mechanism,
        };
        *slot = value.filter(|v| !v.trim().is_empty());
    }

    pub fn is_empty(&self) -> bool {
        self.drug_class.is_none() && self.gene_family.is_none() && self.resistance_mechanism.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    /// Raw FASTA description line without the leading '>'.
    pub header: String,
    /// Normalized nucleotides over {A,C,G,T,N}.
    pub nucleotides: String,
    pub source_db: SourceDb,
    pub labels: LabelSet,
}

/// A raw FASTA entry with the line its header appeared on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastaEntry {
    pub header: String,
    pub sequence: String,
    pub line: usize,
}

/// Uppercases, maps U to T and IUPAC ambiguity codes to N, drops
/// whitespace. Returns the offending character otherwise.
pub fn normalize_sequence(raw: &str) -> Result<String, char> {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_whitespace() {
            continue;
        }
        let n = match c.to_ascii_uppercase() {
            b @ ('A' | 'C' | 'G' | 'T' | 'N') => b,
            'U' => 'T',
            'R' | 'Y' | 'K' | 'M' | 'S' | 'W' | 'B' | 'D' | 'H' | 'V' => 'N',
            _ => return Err(c),
        };
        out.push(n);
    }
    Ok(out)
}

pub fn is_nucleotide_string(s: &str) -> bool {
    s.bytes().all(|b| matches!(b, b'A' | b'C' | b'G' | b'T' | b'N'))
}

/// Parses FASTA text. Sequence lines are concatenated and normalized.
pub fn parse_fasta<R: BufRead>(reader: R) -> Result<Vec<FastaEntry>, SeqIoError> {
    parse_fasta_impl(reader, false)
}

/// Like [`parse_fasta`] but accepts records with an empty sequence body
/// (used for persisted datasets holding text-only samples).
pub fn parse_fasta_allow_empty<R: BufRead>(reader: R) -> Result<Vec<FastaEntry>, SeqIoError> {
    parse_fasta_impl(reader, true)
}

fn parse_fasta_impl<R: BufRead>(reader: R, allow_empty: bool) -> Result<Vec<FastaEntry>, SeqIoError> {
    let mut entries: Vec<FastaEntry> = Vec::new();
    let mut current: Option<FastaEntry> = None;

    let finish = |entry: FastaEntry, entries: &mut Vec<FastaEntry>| {
        if entry.sequence.is_empty() && !allow_empty {
            return Err(SeqIoError::MalformedFasta {
                line: entry.line,
                reason: format!("record '{}' has an empty sequence", entry.header),
            });
        }
        entries.push(entry);
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if let Some(header) = line.strip_prefix('>') {
            if let Some(prev) = current.take() {
                finish(prev, &mut entries)?;
            }
            let header = header.trim();
            if header.is_empty() {
                return Err(SeqIoError::MalformedFasta { line: line_no, reason: "empty header".into() });
            }
            current = Some(FastaEntry { header: header.to_string(), sequence: String::new(), line: line_no });
        } else if line.trim().is_empty() {
            continue;
        } else {
            let Some(entry) = current.as_mut() else {
                return Err(SeqIoError::MalformedFasta {
                    line: line_no,
                    reason: "sequence data before the first '>' header".into(),
                });
            };
            let norm = normalize_sequence(line).map_err(|c| SeqIoError::MalformedFasta {
                line: line_no,
                reason: format!("invalid nucleotide character {c:?}"),
            })?;
            entry.sequence.push_str(&norm);
        }
    }
    if let Some(prev) = current.take() {
        finish(prev, &mut entries)?;
    }
    Ok(entries)
}

/// Writes records as FASTA with sequence lines wrapped at `width`
/// (0 means unwrapped).
pub fn write_fasta<'a, W, I>(mut out: W, records: I, width: usize) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    for (header, seq) in records {
        writeln!(out, ">{header}")?;
        if width == 0 {
            writeln!(out, "{seq}")?;
        } else {
            for chunk in seq.as_bytes().chunks(width) {
                out.write_all(chunk)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

pub fn serialize_fasta(records: &[(String, String)], width: usize) -> String {
    let mut buf = Vec::new();
    write_fasta(&mut buf, records.iter().map(|(h, s)| (h.as_str(), s.as_str())), width)
        .expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("FASTA output is UTF-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldRole {
    Id,
    Type,
    DrugClass,
    Mechanism,
    GeneFamily,
    Ignore,
}

impl FromStr for FieldRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ID" => Ok(FieldRole::Id),
            "TYPE" => Ok(FieldRole::Type),
            "DRUG_CLASS" => Ok(FieldRole::DrugClass),
            "MECHANISM" => Ok(FieldRole::Mechanism),
            "GENE_FAMILY" => Ok(FieldRole::GeneFamily),
            "IGNORE" => Ok(FieldRole::Ignore),
            other => Err(format!("unknown field role '{other}'")),
        }
    }
}

/// Declarative description of a database's FASTA header layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderSchema {
    name: String,
    delimiter: char,
    roles: Vec<FieldRole>,
    flags: Vec<String>,
    id_index: usize,
}

impl HeaderSchema {
    pub fn new(
        name: impl Into<String>,
        delimiter: char,
        roles: Vec<FieldRole>,
        flags: Vec<String>,
    ) -> Result<Self, SeqIoError> {
        let name = name.into();
        let ids: Vec<usize> =
            roles.iter().enumerate().filter(|(_, r)| **r == FieldRole::Id).map(|(i, _)| i).collect();
        if ids.len() != 1 {
            return Err(SeqIoError::InvalidSchema(format!(
                "schema '{name}' must have exactly one ID role, found {}",
                ids.len()
            )));
        }
        for role in [FieldRole::DrugClass, FieldRole::Mechanism, FieldRole::GeneFamily] {
            if roles.iter().filter(|r| **r == role).count() > 1 {
                return Err(SeqIoError::InvalidSchema(format!("schema '{name}' repeats role {role:?}")));
            }
        }
        Ok(HeaderSchema { name, delimiter, roles, flags, id_index: ids[0] })
    }

    /// MEGARes-style: `MEG_1|Drugs|Aminoglycosides|A16S|GeneGrp|RequiresSNPConfirmation`.
    pub fn megares() -> Self {
        HeaderSchema::new(
            "megares",
            '|',
            vec![FieldRole::Id, FieldRole::Type, FieldRole::DrugClass, FieldRole::Mechanism, FieldRole::GeneFamily],
            vec!["RequiresSNPConfirmation".to_string()],
        )
        .expect("built-in schema is valid")
    }

    /// CARD-style: `gb|AF028812|+|392-1544|ARO:3003036|vanSC [organism]`.
    /// The accession is the id; labels come from a [`CardMetadata`] sidecar.
    pub fn card() -> Self {
        HeaderSchema::new(
            "card",
            '|',
            vec![
                FieldRole::Ignore,
                FieldRole::Id,
                FieldRole::Ignore,
                FieldRole::Ignore,
                FieldRole::Ignore,
                FieldRole::Ignore,
            ],
            Vec::new(),
        )
        .expect("built-in schema is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "megares" => Some(HeaderSchema::megares()),
            "card" => Some(HeaderSchema::card()),
            _ => None,
        }
    }

    /// Parses a flat `key = value` schema file:
    ///
    /// ```text
    /// name = mydb
    /// delimiter = |
    /// roles = ID,TYPE,DRUG_CLASS,MECHANISM,GENE_FAMILY
    /// flags = RequiresSNPConfirmation
    /// ```
    pub fn from_config(text: &str) -> Result<Self, SeqIoError> {
        let mut kv: HashMap<String, (usize, String)> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| SeqIoError::Config {
                line: idx + 1,
                reason: "expected 'key = value'".into(),
            })?;
            let key = k.trim().to_ascii_lowercase();
            if !matches!(key.as_str(), "name" | "delimiter" | "roles" | "flags") {
                return Err(SeqIoError::Config { line: idx + 1, reason: format!("unknown key '{key}'") });
            }
            // The delimiter value is kept untrimmed apart from surrounding spaces.
            kv.insert(key, (idx + 1, v.trim().to_string()));
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.as_str());
        let name = get("name").unwrap_or("custom").to_string();
        let delim_raw = get("delimiter").ok_or_else(|| SeqIoError::Config { line: 0, reason: "missing 'delimiter'".into() })?;
        let delim_raw = match delim_raw {
            "\\t" | "tab" => "\t",
            "space" => " ",
            other => other,
        };
        let mut chars = delim_raw.chars();
        let delimiter = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(SeqIoError::Config {
                    line: kv["delimiter"].0,
                    reason: "delimiter must be a single character".into(),
                })
            }
        };
        let roles_raw = get("roles").ok_or_else(|| SeqIoError::Config { line: 0, reason: "missing 'roles'".into() })?;
        let roles = roles_raw
            .split(',')
            .map(FieldRole::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|reason| SeqIoError::Config { line: kv["roles"].0, reason })?;
        let flags = get("flags")
            .map(|f| f.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        HeaderSchema::new(name, delimiter, roles, flags)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn delimiter(&self) -> char {
        self.delimiter
    }

    pub fn roles(&self) -> &[FieldRole] {
        &self.roles
    }

    pub fn flags(&self) -> &[String] {
        &self.flags
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedHeader {
    pub id: String,
    pub labels: LabelSet,
    /// Flag tokens that were present and stripped.
    pub flags: Vec<String>,
}

/// Splits a header by the schema's delimiter and assigns fields by role.
pub fn parse_header(header: &str, schema: &HeaderSchema) -> Result<ParsedHeader, SeqIoError> {
    let mismatch = |reason: String| SeqIoError::HeaderMismatch { schema: schema.name.clone(), reason };
    if header.trim().is_empty() {
        return Err(mismatch("empty header".into()));
    }
    let mut flags = Vec::new();
    let fields: Vec<&str> = header
        .split(schema.delimiter)
        .map(str::trim)
        .filter(|f| {
            if schema.flags.iter().any(|flag| flag == f) {
                flags.push(f.to_string());
                false
            } else {
                true
            }
        })
        .collect();
    if fields.len() <= schema.id_index {
        return Err(mismatch(format!(
            "'{header}' has {} field(s), the id is field {}",
            fields.len(),
            schema.id_index + 1
        )));
    }
    let id = fields[schema.id_index];
    if id.is_empty() {
        return Err(mismatch(format!("'{header}' has an empty id field")));
    }
    let mut labels = LabelSet::default();
    for (role, value) in schema.roles.iter().zip(&fields) {
        let value = Some(value.to_string());
        match role {
            FieldRole::DrugClass => labels.set(LabelAxis::DrugClass, value),
            FieldRole::Mechanism => labels.set(LabelAxis::Mechanism, value),
            FieldRole::GeneFamily => labels.set(LabelAxis::GeneFamily, value),
            FieldRole::Id | FieldRole::Type | FieldRole::Ignore => {}
        }
    }
    Ok(ParsedHeader { id: id.to_string(), labels, flags })
}

/// Result of [`truncate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncated<'a> {
    pub sequence: &'a str,
    pub truncated: bool,
}

/// Keeps the 5' prefix of at most `max_len` nucleotides.
pub fn truncate(seq: &str, max_len: usize) -> Truncated<'_> {
    assert!(max_len >= 1, "max_len must be at least 1");
    if seq.len() <= max_len {
        Truncated { sequence: seq, truncated: false }
    } else {
        // Normalized sequences are ASCII, so byte slicing is char slicing.
        Truncated { sequence: &seq[..max_len], truncated: true }
    }
}

/// Out-of-band CARD labels keyed by accession.
#[derive(Debug, Clone, Default)]
pub struct CardMetadata {
    by_accession: HashMap<String, LabelSet>,
}

impl CardMetadata {
    /// Tab-separated `accession, drug_class, gene_family, resistance_mechanism`.
    /// Lines starting with '#' are comments; empty fields are absent labels.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, SeqIoError> {
        let mut by_accession = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 4 {
                return Err(SeqIoError::Config {
                    line: idx + 1,
                    reason: format!("expected 2 to 4 tab-separated columns, found {}", cols.len()),
                });
            }
            let mut labels = LabelSet::default();
            let col = |i: usize| cols.get(i).map(|s| s.trim().to_string());
            labels.set(LabelAxis::DrugClass, col(1));
            labels.set(LabelAxis::GeneFamily, col(2));
            labels.set(LabelAxis::Mechanism, col(3));
            by_accession.insert(cols[0].trim().to_string(), labels);
        }
        Ok(CardMetadata { by_accession })
    }

    pub fn get(&self, accession: &str) -> Option<&LabelSet> {
        self.by_accession.get(accession)
    }

    pub fn len(&self) -> usize {
        self.by_accession.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_accession.is_empty()
    }
}

/// Options for [`read_records`].
#[derive(Debug, Clone)]
pub struct IngestOptions<'a> {
    pub source_db: SourceDb,
    pub metadata: Option<&'a CardMetadata>,
    /// Keep entries carrying a schema flag (SNP-confirmation markers).
    pub include_flagged: bool,
}

/// Parses FASTA and headers into labeled records.
///
/// Metadata labels, when given, fill axes the header left empty.
pub fn read_records<R: BufRead>(
    reader: R,
    schema: &HeaderSchema,
    opts: &IngestOptions<'_>,
) -> Result<Vec<SequenceRecord>, SeqIoError> {
    let entries = parse_fasta(reader)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        let parsed = parse_header(&entry.header, schema).map_err(|e| match e {
            SeqIoError::HeaderMismatch { schema, reason } => {
                SeqIoError::HeaderMismatch { schema, reason: format!("line {}: {reason}", entry.line) }
            }
            other => other,
        })?;
        if !parsed.flags.is_empty() && !opts.include_flagged {
            continue;
        }
        let mut labels = parsed.labels;
        if let Some(meta) = opts.metadata.and_then(|m| m.get(&parsed.id)) {
            for axis in LabelAxis::ALL {
                if labels.get(axis).is_none() {
                    labels.set(axis, meta.get(axis).map(str::to_string));
                }
            }
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(SeqIoError::DuplicateId(parsed.id));
        }
        out.push(SequenceRecord {
            id: parsed.id,
            header: entry.header,
            nucleotides: entry.sequence,
            source_db: opts.source_db,
            labels,
        });
    }
    Ok(out)
}
