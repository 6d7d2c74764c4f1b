//! Antimicrobial-resistance gene classification toolkit.
//!
//! The crate covers the whole pipeline from reference FASTA files to a
//! metrics table:
//!
//! * [`seq_io`] parses CARD/MEGARes-style FASTA and header labels.
//! * [`tokenizer`] produces 6-mer token sequences and vocabulary ids.
//! * [`text_format`] renders attribute labels in entity-marker styles.
//! * [`ontology`] harmonizes label systems through an is-a term graph.
//! * [`dataset`] merges, filters and splits labeled records.
//! * [`classifiers`] holds the probabilistic classifier contract and the
//!   naive Bayes / softmax-regression baselines.
//! * [`bridge`] speaks the line-delimited protocol to out-of-process models.
//! * [`ensemble`] does weighted soft voting and validation weight tuning.
//! * [`metrics`] computes accuracy, macro F1/precision/recall.
//! * [`read_sim`] simulates short reads with substitution and indel errors.
//! * [`augmentation`] plans, prompts and ingests generated rare-class samples.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Both paths
//! produce bit-identical results.

pub mod augmentation;
pub mod bridge;
pub mod classifiers;
pub mod dataset;
pub mod ensemble;
pub mod metrics;
pub mod ontology;
pub mod par;
pub mod read_sim;
pub mod rng;
pub mod seq_io;
pub mod synth;
pub mod text_format;
pub mod tokenizer;

pub use classifiers::{Classifier, ClassifierError, Modality, ModelInput, ProbabilityVector};
pub use dataset::{Dataset, SplitManifest};
pub use seq_io::{LabelAxis, LabelSet, SequenceRecord, SourceDb};
