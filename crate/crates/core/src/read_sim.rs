//! Short-read simulation with a uniform per-base error model.
//!
//! Each reference gets its own generator keyed by `(seed, fnv1a64(id))`,
//! so output does not depend on processing order or thread count.

use std::io::Write;

use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::par;
use crate::rng::{fnv1a64, SplitMix64};
use crate::seq_io::{SequenceRecord, SourceDb};

#[derive(Debug, Error)]
pub enum ReadSimError {
    #[error("invalid read profile: {0}")]
    InvalidProfile(String),
    #[error("reference '{id}' has {len} nt, needs at least {needed}")]
    RefTooShort { id: String, len: usize, needed: usize },
    #[error("every reference was too short; no reads produced")]
    NoReads,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReadAmount {
    /// Reads (single-end) or fragments (paired) per reference.
    PerRef(usize),
    /// Mean base coverage of each reference.
    Coverage(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadProfile {
    pub read_len: usize,
    pub sub_rate: f64,
    pub ins_rate: f64,
    pub del_rate: f64,
    pub paired: bool,
    pub fragment_mean: usize,
    pub fragment_sd: f64,
    pub amount: ReadAmount,
    pub seed: u64,
    /// Phred+33 character of the constant quality line.
    pub quality_char: char,
}

impl Default for ReadProfile {
    fn default() -> Self {
        ReadProfile {
            read_len: 150,
            sub_rate: 0.0,
            ins_rate: 0.0,
            del_rate: 0.0,
            paired: false,
            fragment_mean: 300,
            fragment_sd: 30.0,
            amount: ReadAmount::PerRef(10),
            seed: 0,
            quality_char: 'I',
        }
    }
}

impl ReadProfile {
    pub fn validate(&self) -> Result<(), ReadSimError> {
        let bad = |m: &str| Err(ReadSimError::InvalidProfile(m.into()));
        if self.read_len == 0 {
            return bad("read length must be at least 1");
        }
        for r in [self.sub_rate, self.ins_rate, self.del_rate] {
            if !(0.0..1.0).contains(&r) {
                return bad("error rates must lie in [0, 1)");
            }
        }
        if self.sub_rate + self.ins_rate + self.del_rate >= 1.0 {
            return bad("error rates must sum to less than 1");
        }
        if self.paired && self.fragment_mean < self.read_len {
            return bad("fragment mean must be at least the read length");
        }
        if !(self.fragment_sd >= 0.0 && self.fragment_sd.is_finite()) {
            return bad("fragment sd must be non-negative");
        }
        if let ReadAmount::Coverage(c) = self.amount {
            if !(c > 0.0 && c.is_finite()) {
                return bad("coverage must be positive");
            }
        }
        if !self.quality_char.is_ascii_graphic() {
            return bad("quality character must be printable ASCII");
        }
        Ok(())
    }

    fn min_ref_len(&self) -> usize {
        if self.paired {
            self.fragment_mean
        } else {
            self.read_len
        }
    }

    /// Reads (single-end) or fragments (paired) drawn from a reference.
    pub fn units_for(&self, ref_len: usize) -> usize {
        match self.amount {
            ReadAmount::PerRef(n) => n,
            ReadAmount::Coverage(c) => {
                let per_unit = if self.paired { 2 * self.read_len } else { self.read_len };
                (c * ref_len as f64 / per_unit as f64).ceil() as usize
            }
        }
    }
}

/// Counts of sampled error events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorTally {
    /// Per-base draws.
    pub draws: u64,
    pub substitutions: u64,
    pub insertions: u64,
    pub deletions: u64,
}

impl std::ops::AddAssign for ErrorTally {
    fn add_assign(&mut self, o: ErrorTally) {
        self.draws += o.draws;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRead {
    pub record: SequenceRecord,
    pub quality: String,
    /// Offset of the read template on the forward reference strand.
    pub start: usize,
    pub reverse: bool,
    pub tally: ErrorTally,
}

const BASES: [u8; 4] = *b"ACGT";

fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'C' => b'G',
        b'G' => b'C',
        b'T' => b'A',
        other => other,
    }
}

pub fn reverse_complement(seq: &str) -> String {
    seq.bytes().rev().map(|b| complement(b) as char).collect()
}

/// Walks `template` emitting up to `len` bases with per-base events.
fn mutate(template: &[u8], len: usize, p: &ReadProfile, rng: &mut SplitMix64) -> (String, ErrorTally) {
    let mut out = Vec::with_capacity(len);
    let mut tally = ErrorTally::default();
    let mut pos = 0;
    let (s, i, d) = (p.sub_rate, p.sub_rate + p.ins_rate, p.sub_rate + p.ins_rate + p.del_rate);
    while out.len() < len && pos < template.len() {
        let u = rng.next_f64();
        tally.draws += 1;
        if u < s {
            let orig = template[pos];
            let others: Vec<u8> = BASES.iter().copied().filter(|&b| b != orig).collect();
            out.push(others[rng.below(others.len() as u64) as usize]);
            pos += 1;
            tally.substitutions += 1;
        } else if u < i {
            out.push(BASES[rng.below(4) as usize]);
            tally.insertions += 1;
        } else if u < d {
            pos += 1;
            tally.deletions += 1;
        } else {
            out.push(template[pos]);
            pos += 1;
        }
    }
    (String::from_utf8(out).expect("ASCII"), tally)
}

fn make_read(reference: &SequenceRecord, id: String, seq: String) -> SequenceRecord {
    SequenceRecord {
        header: id.clone(),
        id,
        nucleotides: seq,
        source_db: SourceDb::Simulated,
        labels: reference.labels.clone(),
    }
}

/// Simulated reads of one reference, ids `{ref}/read{n}` (1-based) with
/// `/1` and `/2` mate suffixes in paired mode.
pub fn simulate(reference: &SequenceRecord, profile: &ReadProfile) -> Result<Vec<SimulatedRead>, ReadSimError> {
    profile.validate()?;
    let refseq = reference.nucleotides.as_bytes();
    let len = refseq.len();
    let needed = profile.min_ref_len();
    if len < needed {
        return Err(ReadSimError::RefTooShort { id: reference.id.clone(), len, needed });
    }
    let mut rng = SplitMix64::from_keys(&[profile.seed, fnv1a64(reference.id.as_bytes())]);
    let quality = |s: &str| profile.quality_char.to_string().repeat(s.len());
    let units = profile.units_for(len);
    let mut reads = Vec::with_capacity(if profile.paired { 2 * units } else { units });
    for n in 1..=units {
        if profile.paired {
            let drawn = (profile.fragment_mean as f64 + profile.fragment_sd * rng.next_normal()).round();
            let frag = (drawn.max(0.0) as usize).clamp(profile.read_len, len);
            let start = rng.below((len - frag + 1) as u64) as usize;
            let fwd = &refseq[start..start + frag];
            let rev: Vec<u8> = fwd.iter().rev().map(|&b| complement(b)).collect();
            for (mate, template, reverse) in [(1, fwd, false), (2, rev.as_slice(), true)] {
                let (seq, tally) = mutate(template, profile.read_len, profile, &mut rng);
                let id = format!("{}/read{n}/{mate}", reference.id);
                reads.push(SimulatedRead {
                    quality: quality(&seq),
                    record: make_read(reference, id, seq),
                    start,
                    reverse,
                    tally,
                });
            }
        } else {
            let start = rng.below((len - profile.read_len + 1) as u64) as usize;
            let (seq, tally) = mutate(&refseq[start..], profile.read_len, profile, &mut rng);
            let id = format!("{}/read{n}", reference.id);
            reads.push(SimulatedRead {
                quality: quality(&seq),
                record: make_read(reference, id, seq),
                start,
                reverse: false,
                tally,
            });
        }
    }
    Ok(reads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadsDataset {
    pub dataset: Dataset,
    pub qualities: Vec<String>,
    /// References skipped as too short.
    pub skipped: Vec<String>,
    pub tally: ErrorTally,
}

/// Simulates every reference; too-short references are skipped with a
/// warning and counted.
pub fn build_reads_dataset(ds: &Dataset, profile: &ReadProfile) -> Result<ReadsDataset, ReadSimError> {
    profile.validate()?;
    let per_ref = par::map(ds.records(), |r| simulate(r, profile));
    let mut records = Vec::new();
    let mut qualities = Vec::new();
    let mut skipped = Vec::new();
    let mut tally = ErrorTally::default();
    for (r, res) in ds.records().iter().zip(per_ref) {
        match res {
            Ok(reads) => {
                for read in reads {
                    tally += read.tally;
                    qualities.push(read.quality);
                    records.push(read.record);
                }
            }
            Err(e @ ReadSimError::RefTooShort { .. }) => {
                log::warn!("skipping {}: {e}", r.id);
                skipped.push(r.id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(ReadSimError::NoReads);
    }
    Ok(ReadsDataset { dataset: ds.with_records(records)?, qualities, skipped, tally })
}

/// Four-line FASTQ records.
pub fn write_fastq<'a, W: Write>(mut out: W, reads: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> std::io::Result<()> {
    for (id, seq, qual) in reads {
        writeln!(out, "@{id}\n{seq}\n+\n{qual}")?;
    }
    Ok(())
}
