//! Synthetic two-modality datasets.
//!
//! Half of the classes are identifiable only from a class-specific
//! sequence motif and share one attribute text; the other half share one
//! sequence motif and are identifiable only from their attribute text.
//! A single-modality model can therefore separate at most half of the
//! classes, while the two modalities together separate all of them.

use crate::dataset::{Dataset, DatasetError};
use crate::rng::SplitMix64;
use crate::seq_io::{LabelAxis, LabelSet, SequenceRecord, SourceDb};

const WORDS: [&str; 26] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett", "kilo", "lima", "mike",
    "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey", "xray",
    "yankee", "zulu",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Background length before motifs are written in.
    pub seq_len: usize,
    pub motif_len: usize,
    pub motif_copies: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_classes: 10, n_samples: 500, seed: 1, seq_len: 200, motif_len: 20, motif_copies: 2 }
    }
}

impl SynthConfig {
    /// Classes `0..n/2` carry sequence signal, the rest text signal.
    pub fn sequence_informative(&self, class: usize) -> bool {
        class < self.n_classes / 2
    }

    pub fn class_name(class: usize) -> String {
        format!("class{class:02}")
    }
}

fn random_bases(rng: &mut SplitMix64, n: usize) -> Vec<u8> {
    (0..n).map(|_| b"ACGT"[rng.below(4) as usize]).collect()
}

/// Generates `n_samples` records assigned round-robin to classes, labelled
/// on the drug-class axis. Gene family and mechanism carry the text signal.
pub fn two_modality_dataset(cfg: &SynthConfig) -> Result<Dataset, DatasetError> {
    assert!(cfg.n_classes >= 2 && cfg.n_classes <= 2 * WORDS.len(), "unsupported class count");
    assert!(cfg.motif_copies * cfg.motif_len <= cfg.seq_len, "motifs do not fit");
    let mut motif_rng = SplitMix64::from_keys(&[cfg.seed, 0x6d6f746966]);
    let shared_motif = random_bases(&mut motif_rng, cfg.motif_len);
    let class_motifs: Vec<Vec<u8>> = (0..cfg.n_classes).map(|_| random_bases(&mut motif_rng, cfg.motif_len)).collect();
    let slot = cfg.seq_len / cfg.motif_copies;
    let records = (0..cfg.n_samples)
        .map(|i| {
            let class = i % cfg.n_classes;
            let mut rng = SplitMix64::from_keys(&[cfg.seed, i as u64]);
            let mut seq = random_bases(&mut rng, cfg.seq_len);
            let motif = if cfg.sequence_informative(class) { &class_motifs[class] } else { &shared_motif };
            for copy in 0..cfg.motif_copies {
                let at = copy * slot + rng.below((slot - cfg.motif_len + 1) as u64) as usize;
                seq[at..at + cfg.motif_len].copy_from_slice(motif);
            }
            let mut labels = LabelSet::default();
            labels.set(LabelAxis::DrugClass, Some(SynthConfig::class_name(class)));
            if cfg.sequence_informative(class) {
                labels.set(LabelAxis::GeneFamily, Some("common family".into()));
            } else {
                let w = &WORDS[class % WORDS.len()];
                labels.set(LabelAxis::GeneFamily, Some(format!("{w} family")));
            }
            labels.set(LabelAxis::Mechanism, Some("common mechanism".into()));
            let id = format!("syn{i:05}");
            SequenceRecord {
                header: id.clone(),
                id,
                nucleotides: String::from_utf8(seq).expect("ASCII"),
                source_db: SourceDb::Simulated,
                labels,
            }
        })
        .collect();
    Dataset::new(records, LabelAxis::DrugClass)
}
