//! Versioned binary model files.
//!
//! Layout (all integers and floats little-endian):
//! magic, format version (u32), modality (u8), model kind (u8), input spec,
//! class vocabulary, feature spec, then tensors as
//! `ndim (u32), dims (u64 each), values (f64 each)`.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ClassifierError, FeatureKind, InputSpec, Modality, ModelKind, NaiveBayes, SoftmaxRegression, TrainedModel};
use crate::seq_io::LabelAxis;
use crate::text_format::MarkerStyle;

pub const MAGIC: &[u8; 8] = b"AMRKMDL\0";
pub const FORMAT_VERSION: u32 = 1;

const KIND_NB: u8 = 0;
const KIND_SOFTMAX: u8 = 1;
const FEAT_KMER: u8 = 0;
const FEAT_BOW: u8 = 1;
const MAX_STRING: u32 = 1 << 20;
const MAX_ITEMS: u64 = 1 << 32;

pub(super) fn encode(m: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let w = &mut out;
    // Vec<u8> writes are infallible.
    w.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    w.write_u8(match m.spec.modality {
        Modality::Sequence => 0,
        Modality::Text => 1,
    })
    .unwrap();
    w.write_u8(match m.kind {
        ModelKind::NaiveBayes(_) => KIND_NB,
        ModelKind::Softmax(_) => KIND_SOFTMAX,
    })
    .unwrap();
    w.write_u8(m.spec.task_axis.code()).unwrap();
    w.write_u64::<LittleEndian>(m.spec.max_len as u64).unwrap();
    w.write_u8(m.spec.marker_style.code()).unwrap();
    w.write_u8(m.spec.table1_verbatim as u8).unwrap();
    write_strings(w, &m.classes);
    match &m.kind {
        ModelKind::NaiveBayes(nb) => {
            w.write_u32::<LittleEndian>(nb.k as u32).unwrap();
            w.write_f64::<LittleEndian>(nb.alpha).unwrap();
            w.write_u32::<LittleEndian>(2).unwrap();
            write_tensor(w, &[nb.log_prior.len()], &nb.log_prior);
            write_tensor(w, &[nb.n_classes(), nb.n_features()], &nb.log_likelihood);
        }
        ModelKind::Softmax(sm) => {
            match sm.features {
                FeatureKind::KmerFrequency { k } => {
                    w.write_u8(FEAT_KMER).unwrap();
                    w.write_u32::<LittleEndian>(k as u32).unwrap();
                }
                FeatureKind::BagOfWords => w.write_u8(FEAT_BOW).unwrap(),
            }
            write_strings(w, &sm.word_vocab);
            w.write_u32::<LittleEndian>(2).unwrap();
            write_tensor(w, &[sm.n_classes(), sm.n_features()], &sm.weights);
            write_tensor(w, &[sm.bias.len()], &sm.bias);
        }
    }
    out
}

fn write_strings(w: &mut Vec<u8>, items: &[String]) {
    w.write_u32::<LittleEndian>(items.len() as u32).unwrap();
    for s in items {
        w.write_u32::<LittleEndian>(s.len() as u32).unwrap();
        w.extend_from_slice(s.as_bytes());
    }
}

fn write_tensor(w: &mut Vec<u8>, dims: &[usize], values: &[f64]) {
    w.write_u32::<LittleEndian>(dims.len() as u32).unwrap();
    for &d in dims {
        w.write_u64::<LittleEndian>(d as u64).unwrap();
    }
    for &v in values {
        w.write_f64::<LittleEndian>(v).unwrap();
    }
}

fn corrupt(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::CorruptModelFile(msg.into())
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn remaining(&self) -> u64 {
        self.0.get_ref().len() as u64 - self.0.position()
    }

    fn u8(&mut self) -> Result<u8, ClassifierError> {
        self.0.read_u8().map_err(|_| corrupt("unexpected end of file"))
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        self.0.read_u32::<LittleEndian>().map_err(|_| corrupt("unexpected end of file"))
    }

    fn u64(&mut self) -> Result<u64, ClassifierError> {
        self.0.read_u64::<LittleEndian>().map_err(|_| corrupt("unexpected end of file"))
    }

    fn f64(&mut self) -> Result<f64, ClassifierError> {
        self.0.read_f64::<LittleEndian>().map_err(|_| corrupt("unexpected end of file"))
    }

    fn string(&mut self) -> Result<String, ClassifierError> {
        let n = self.u32()?;
        if n > MAX_STRING || n as u64 > self.remaining() {
            return Err(corrupt("string length out of range"));
        }
        let mut buf = vec![0u8; n as usize];
        self.0.read_exact(&mut buf).map_err(|_| corrupt("unexpected end of file"))?;
        String::from_utf8(buf).map_err(|_| corrupt("string is not UTF-8"))
    }

    fn strings(&mut self) -> Result<Vec<String>, ClassifierError> {
        let n = self.u32()?;
        if n as u64 * 4 > self.remaining() {
            return Err(corrupt("string count out of range"));
        }
        (0..n).map(|_| self.string()).collect()
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Vec<f64>, ClassifierError> {
        let ndim = self.u32()? as usize;
        if ndim != expected.len() {
            return Err(corrupt(format!("tensor has {ndim} dims, expected {}", expected.len())));
        }
        let mut total: u64 = 1;
        for &e in expected {
            let d = self.u64()?;
            if d != e as u64 {
                return Err(corrupt(format!("tensor dimension {d} does not match {e}")));
            }
            total = total.saturating_mul(d);
        }
        if total > MAX_ITEMS || total * 8 > self.remaining() {
            return Err(corrupt("tensor data truncated"));
        }
        (0..total).map(|_| self.f64()).collect()
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<TrainedModel, ClassifierError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let mut r = Reader(Cursor::new(bytes));
    r.0.set_position(MAGIC.len() as u64);
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ClassifierError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let modality = match r.u8()? {
        0 => Modality::Sequence,
        1 => Modality::Text,
        m => return Err(corrupt(format!("unknown modality code {m}"))),
    };
    let kind = r.u8()?;
    let task_axis = LabelAxis::from_code(r.u8()?).ok_or_else(|| corrupt("unknown task axis"))?;
    let max_len = r.u64()? as usize;
    let marker_style = MarkerStyle::from_code(r.u8()?).ok_or_else(|| corrupt("unknown marker style"))?;
    let table1_verbatim = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(corrupt("bad flag byte")),
    };
    let spec = InputSpec { modality, task_axis, max_len, marker_style, table1_verbatim };
    let classes = r.strings()?;
    if classes.is_empty() {
        return Err(corrupt("empty class vocabulary"));
    }
    let c = classes.len();
    let kind = match kind {
        KIND_NB => {
            let k = r.u32()? as usize;
            if !(1..=12).contains(&k) {
                return Err(corrupt(format!("k = {k} out of range")));
            }
            let alpha = r.f64()?;
            if r.u32()? != 2 {
                return Err(corrupt("expected 2 tensors"));
            }
            let log_prior = r.tensor(&[c])?;
            let log_likelihood = r.tensor(&[c, 1usize << (2 * k)])?;
            ModelKind::NaiveBayes(NaiveBayes { k, alpha, log_prior, log_likelihood })
        }
        KIND_SOFTMAX => {
            let features = match r.u8()? {
                FEAT_KMER => {
                    let k = r.u32()? as usize;
                    if !(1..=12).contains(&k) {
                        return Err(corrupt(format!("k = {k} out of range")));
                    }
                    FeatureKind::KmerFrequency { k }
                }
                FEAT_BOW => FeatureKind::BagOfWords,
                f => return Err(corrupt(format!("unknown feature code {f}"))),
            };
            let word_vocab = r.strings()?;
            if r.u32()? != 2 {
                return Err(corrupt("expected 2 tensors"));
            }
            let f = match features {
                FeatureKind::KmerFrequency { k } => 1usize << (2 * k),
                FeatureKind::BagOfWords => word_vocab.len(),
            };
            let weights = r.tensor(&[c, f])?;
            let bias = r.tensor(&[c])?;
            ModelKind::Softmax(SoftmaxRegression { features, word_vocab, weights, bias })
        }
        k => return Err(corrupt(format!("unknown model kind {k}"))),
    };
    if r.remaining() != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(TrainedModel { spec, classes, kind, loss_history: Vec::new() })
}
