//! k-mer tokenization and vocabulary ids for the sequence model input.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("invalid nucleotide {ch:?} at position {pos}")]
    InvalidAlphabet { ch: char, pos: usize },
    #[error("pad_to {pad_to} is shorter than {len} tokens")]
    PadTooShort { pad_to: usize, len: usize },
    #[error("vocabulary is for k={vocab_k}, tokens were produced with k={k}")]
    KMismatch { vocab_k: usize, k: usize },
    #[error("bad vocabulary file at line {line}: {reason}")]
    BadVocabulary { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";

const BASES: [char; 4] = ['A', 'C', 'G', 'T'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_id: String,
    pub k: usize,
}

impl TokenSequence {
    pub fn joined(&self) -> String {
        self.tokens.concat()
    }
}

fn check_alphabet(seq: &str) -> Result<(), TokenizerError> {
    match seq.char_indices().find(|(_, c)| !matches!(c, 'A' | 'C' | 'G' | 'T' | 'N')) {
        Some((pos, ch)) => Err(TokenizerError::InvalidAlphabet { ch, pos }),
        None => Ok(()),
    }
}

/// Non-overlapping k-mers from the left; a trailing remainder shorter than
/// `k` is emitted one nucleotide per token.
pub fn kmer_tokenize(seq: &str, k: usize) -> Result<TokenSequence, TokenizerError> {
    assert!(k >= 1, "k must be at least 1");
    check_alphabet(seq)?;
    let full = seq.len() / k * k;
    let mut tokens: Vec<String> = seq.as_bytes()[..full].chunks(k).map(|c| String::from_utf8_lossy(c).into_owned()).collect();
    tokens.extend(seq[full..].chars().map(String::from));
    Ok(TokenSequence { tokens, source_id: String::new(), k })
}

/// Overlapping k-mers with the given stride (stride 1 = every window).
/// Sequences shorter than `k` yield no tokens.
pub fn kmer_windows(seq: &str, k: usize, stride: usize) -> Result<Vec<&str>, TokenizerError> {
    assert!(k >= 1 && stride >= 1, "k and stride must be at least 1");
    check_alphabet(seq)?;
    if seq.len() < k {
        return Ok(Vec::new());
    }
    Ok((0..=seq.len() - k).step_by(stride).map(|i| &seq[i..i + k]).collect())
}

/// 2-bit code of an ACGT k-mer (A=0, C=1, G=2, T=3, most significant first).
/// `None` if the k-mer contains anything else.
pub fn kmer_index(kmer: &[u8]) -> Option<usize> {
    kmer.iter().try_fold(0usize, |acc, &b| {
        let code = match b {
            b'A' => 0,
            b'C' => 1,
            b'G' => 2,
            b'T' => 3,
            _ => return None,
        };
        Some((acc << 2) | code)
    })
}

/// Calls `f` with the index of every stride-1 ACGT k-mer; windows containing
/// N (or anything else) are skipped.
pub fn for_each_kmer_index(seq: &[u8], k: usize, mut f: impl FnMut(usize)) {
    assert!((1..=31).contains(&k), "k must be in 1..=31");
    let mask = (1usize << (2 * k)) - 1;
    let mut code = 0usize;
    let mut valid = 0usize;
    for &b in seq {
        let c = match b {
            b'A' => 0,
            b'C' => 1,
            b'G' => 2,
            b'T' => 3,
            _ => {
                valid = 0;
                code = 0;
                continue;
            }
        };
        code = ((code << 2) | c) & mask;
        valid += 1;
        if valid >= k {
            f(code);
        }
    }
}

/// Token ↔ id table: specials, single nucleotides and 'N', then all 4^k
/// k-mers in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerVocabulary {
    k: usize,
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl KmerVocabulary {
    pub fn new(k: usize) -> Self {
        assert!((1..=12).contains(&k), "k must be in 1..=12");
        let mut tokens: Vec<String> = vec![PAD.into(), UNK.into(), CLS.into()];
        tokens.extend(["A", "C", "G", "T", "N"].iter().map(|s| s.to_string()));
        // For k = 1 the k-mers coincide with the single-nucleotide tokens.
        if k > 1 {
            for i in 0..(1usize << (2 * k)) {
                tokens.push(decode_kmer(i, k));
            }
        }
        KmerVocabulary::from_tokens(k, tokens).expect("generated vocabulary is consistent")
    }

    fn from_tokens(k: usize, tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::BadVocabulary { line: i + 1, reason: format!("duplicate token '{t}'") });
            }
        }
        Ok(KmerVocabulary { k, tokens, token_to_id })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn unk_id(&self) -> u32 {
        1
    }

    pub fn cls_id(&self) -> u32 {
        2
    }

    /// One token per line; the line number (from 0) is the id.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    /// Reads a file produced by [`KmerVocabulary::write`] and checks that it
    /// is the canonical vocabulary for its k.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, TokenizerError> {
        let tokens = reader.lines().collect::<Result<Vec<_>, _>>()?;
        for (i, s) in [PAD, UNK, CLS].iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(TokenizerError::BadVocabulary { line: i + 1, reason: format!("expected special {s}") });
            }
        }
        let k = tokens.last().map(|t| t.len()).unwrap_or(0);
        if k == 0 || k > 12 {
            return Err(TokenizerError::BadVocabulary { line: tokens.len(), reason: "cannot infer k".into() });
        }
        let canonical = KmerVocabulary::new(k);
        if canonical.tokens.len() != tokens.len() {
            return Err(TokenizerError::BadVocabulary {
                line: tokens.len(),
                reason: format!("expected {} tokens for k={k}", canonical.tokens.len()),
            });
        }
        if let Some(i) = canonical.tokens.iter().zip(&tokens).position(|(a, b)| a != b) {
            return Err(TokenizerError::BadVocabulary { line: i + 1, reason: format!("unexpected token '{}'", tokens[i]) });
        }
        Ok(canonical)
    }
}

fn decode_kmer(mut index: usize, k: usize) -> String {
    let mut buf = vec!['A'; k];
    for slot in buf.iter_mut().rev() {
        *slot = BASES[index & 3];
        index >>= 2;
    }
    buf.into_iter().collect()
}

/// Maps tokens to ids. k-length tokens containing 'N' and unknown tokens map
/// to UNK; `pad_to` right-pads with PAD.
pub fn encode(ts: &TokenSequence, vocab: &KmerVocabulary, pad_to: Option<usize>) -> Result<Vec<u32>, TokenizerError> {
    if ts.k != vocab.k() {
        return Err(TokenizerError::KMismatch { vocab_k: vocab.k(), k: ts.k });
    }
    let mut ids: Vec<u32> = ts
        .tokens
        .iter()
        .map(|t| {
            if t.len() == ts.k && t.len() > 1 && t.contains('N') {
                vocab.unk_id()
            } else {
                vocab.id(t).unwrap_or(vocab.unk_id())
            }
        })
        .collect();
    if let Some(pad_to) = pad_to {
        if pad_to < ids.len() {
            return Err(TokenizerError::PadTooShort { pad_to, len: ids.len() });
        }
        ids.resize(pad_to, vocab.pad_id());
    }
    Ok(ids)
}
