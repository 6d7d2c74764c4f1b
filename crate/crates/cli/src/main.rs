//! `amrkit` command-line front end.
//!
//! Exit codes: 0 ok, 2 input error, 3 data-integrity error, 4 bridge error.

mod commands;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use amrkit::seq_io::LabelAxis;
use amrkit::text_format::MarkerStyle;
use amrkit::Modality;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "amrkit", version, about = "Antimicrobial-resistance gene classification toolkit")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a FASTA database into a dataset directory.
    Ingest(IngestArgs),
    /// Map raw labels onto integrated classes, merge databases and drop rare classes.
    Integrate(IntegrateArgs),
    /// Assign records to TRAIN/TEST/VAL.
    Split(SplitArgs),
    /// Train a baseline classifier on the TRAIN bucket.
    Train(TrainArgs),
    /// Write class probabilities for every record of a bucket.
    Predict(PredictArgs),
    /// Grid-search soft-voting weights for two members on the VAL bucket.
    TuneEnsemble(TuneArgs),
    /// Score models and ensembles on a bucket.
    Evaluate(EvaluateArgs),
    /// Simulate short reads from every reference of a dataset.
    SimulateReads(SimulateArgs),
    /// Fill rare TRAIN classes with generated samples from a bridged model.
    Augment(AugmentArgs),
    /// Run the in-repo bridge fixture server over stdio or TCP.
    ServeFixture(ServeArgs),
    /// Run the bridge conformance suite against an endpoint.
    BridgeCheck(BridgeCheckArgs),
}

#[derive(Args, Debug, Clone, Copy)]
pub struct AxisArg {
    /// Label axis to classify.
    #[arg(long, default_value = "drug-class", value_parser = parse_axis)]
    pub task_axis: LabelAxis,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct SeedArg {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct TextArgs {
    /// Marker style for attribute-text inputs.
    #[arg(long, default_value = "typed-punct", value_parser = parse_style)]
    pub marker_style: MarkerStyle,
    /// Typed-marker rendering that shows the attribute name on alternate pairs.
    #[arg(long)]
    pub table1_verbatim: bool,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    /// `card`, `megares` or a header-schema config file.
    #[arg(long)]
    pub schema: String,
    /// Accession-keyed label table for CARD-style headers.
    #[arg(long)]
    pub card_metadata: Option<PathBuf>,
    /// Source database label (CARD or MEGARES); required for custom schemas.
    #[arg(long)]
    pub source_db: Option<String>,
    /// Keep entries carrying a schema flag such as SNP confirmation.
    #[arg(long)]
    pub include_flagged: bool,
    #[command(flatten)]
    pub axis: AxisArg,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    /// Dataset directories, merged in order (first occurrence wins on duplicates).
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Ontology term table; enables gene-family integration.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    /// Ontology depth of the integrated gene-family terms (roots are depth 0).
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    #[arg(long)]
    pub mechanism_table: Option<PathBuf>,
    #[arg(long)]
    pub drugclass_table: Option<PathBuf>,
    /// Unmapped labels: drop, keep-raw or other.
    #[arg(long, default_value = "drop")]
    pub policy: String,
    /// Remove classes with fewer records than this (0 keeps all).
    #[arg(long, default_value_t = 15)]
    pub min_class_size: usize,
    #[command(flatten)]
    pub axis: AxisArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Mapping audit table; defaults to `mapping_audit.tsv` in the output directory.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub axis: AxisArg,
    #[command(flatten)]
    pub seed: SeedArg,
    /// TRAIN,TEST,VAL fractions.
    #[arg(long, default_value = "0.75,0.2,0.05")]
    pub fractions: String,
    /// Split without per-class stratification.
    #[arg(long)]
    pub no_stratify: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    NaiveBayes,
    Softmax,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    Kmer,
    Bow,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub axis: AxisArg,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_enum, default_value = "naive-bayes")]
    pub model: ModelChoice,
    /// Softmax features; naive Bayes always uses k-mer counts.
    #[arg(long, value_enum, default_value = "kmer")]
    pub features: FeatureChoice,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Input modality; defaults to text for bag-of-words and sequence otherwise.
    #[arg(long, value_parser = parse_modality)]
    pub modality: Option<Modality>,
    #[command(flatten)]
    pub text: TextArgs,
    /// Leading nucleotides kept from each sequence.
    #[arg(long, default_value_t = 1000)]
    pub max_len: usize,
    /// Laplace smoothing for naive Bayes.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BucketArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split manifest; without it every record is used.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub bucket: String,
    #[command(flatten)]
    pub axis: AxisArg,
}

#[derive(Args, Debug, Clone)]
pub struct BridgeArgs {
    /// Bridge reply timeout in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model file, `tcp://host:port` or `cmd:program args`.
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub data: BucketArgs,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub bridge: BridgeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Exactly two members: model files, `tcp://host:port` or `cmd:program args`.
    #[arg(long = "member", required = true, num_args = 1)]
    pub members: Vec<String>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub axis: AxisArg,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// Break objective ties toward the larger first-member weight.
    #[arg(long)]
    pub favor_first: bool,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub bridge: BridgeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    #[value(name = "json-like", alias = "json")]
    Json,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Models to score individually.
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Ensemble weights file written by tune-ensemble.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub data: BucketArgs,
    /// Dataset column of the results table; defaults to the dataset directory name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_enum, default_value = "tsv")]
    pub format: ReportFormat,
    /// Append per-class tables.
    #[arg(long)]
    pub per_class: bool,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub bridge: BridgeArgs,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub axis: AxisArg,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 150)]
    pub read_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sub_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ins_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub del_rate: f64,
    #[arg(long)]
    pub paired: bool,
    #[arg(long, default_value_t = 300)]
    pub fragment_mean: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fragment_sd: f64,
    #[arg(long, conflicts_with = "coverage")]
    pub reads_per_ref: Option<usize>,
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long, default_value_t = 'I')]
    pub quality_char: char,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub fastq: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub axis: AxisArg,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Generator endpoint: `tcp://host:port` or `cmd:program args`.
    #[arg(long)]
    pub bridge: String,
    #[command(flatten)]
    pub bridge_opts: BridgeArgs,
    #[arg(long, default_value_t = 15)]
    pub threshold: usize,
    /// TRAIN count to fill up to; defaults to the threshold.
    #[arg(long)]
    pub target: Option<usize>,
    /// Prompt template with {class} and {exemplars} placeholders.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Candidates requested per missing sample.
    #[arg(long, default_value_t = 2)]
    pub oversample: usize,
    #[arg(long, default_value = "sequence", value_parser = parse_modality)]
    pub modality: Modality,
    #[command(flatten)]
    pub text: TextArgs,
    /// Provenance timestamp (seconds since the epoch); defaults to now.
    #[arg(long)]
    pub timestamp: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Output split manifest.
    #[arg(long)]
    pub out_split: PathBuf,
    /// Audit log, appended to.
    #[arg(long)]
    pub audit: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Class vocabulary served with uniform probabilities.
    #[arg(long, value_delimiter = ',', required_unless_present = "model")]
    pub classes: Vec<String>,
    /// Serve the predictions of a trained model instead.
    #[arg(long, conflicts_with = "classes")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "sequence", value_parser = parse_modality)]
    pub modality: Modality,
    /// Enable generation: mutated copies of prompt exemplars at this per-base rate.
    #[arg(long)]
    pub generate_rate: Option<f64>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Listen on this address instead of stdio.
    #[arg(long)]
    pub tcp: Option<String>,
}

#[derive(Args, Debug)]
pub struct BridgeCheckArgs {
    /// `tcp://host:port` or `cmd:program args`.
    #[arg(long)]
    pub endpoint: String,
    /// Classes the server must report.
    #[arg(long, value_delimiter = ',')]
    pub expect_classes: Vec<String>,
    #[arg(long, default_value_t = 5_000)]
    pub timeout_ms: u64,
}

fn parse_axis(s: &str) -> Result<LabelAxis, String> {
    s.parse()
}

fn parse_style(s: &str) -> Result<MarkerStyle, String> {
    s.parse()
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
