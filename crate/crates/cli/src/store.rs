//! On-disk artifacts shared between subcommands.
//!
//! A dataset is a directory holding `records.fasta` and `labels.tsv`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use amrkit::bridge::{BridgeClient, BridgeEndpoint};
use amrkit::classifiers::{InputSpec, TrainedModel};
use amrkit::dataset::{read_records, write_records, SplitManifest};
use amrkit::text_format::MarkerStyle;
use amrkit::{Classifier, Dataset, LabelAxis, Modality, SequenceRecord};

use crate::error::{CliError, CliResult, Context};

pub const RECORDS_FILE: &str = "records.fasta";
pub const LABELS_FILE: &str = "labels.tsv";

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).ctx(path.display())?))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).ctx(parent.display())?;
    }
    Ok(BufWriter::new(File::create(path).ctx(path.display())?))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).ctx(path.display())
}

pub fn load_records(dir: &Path) -> CliResult<Vec<SequenceRecord>> {
    let fasta = dir.join(RECORDS_FILE);
    let labels = dir.join(LABELS_FILE);
    read_records(open(&fasta)?, open(&labels)?).ctx(dir.display())
}

/// Records with a label on `axis`; the rest are dropped with a warning.
pub fn load_dataset(dir: &Path, axis: LabelAxis) -> CliResult<Dataset> {
    let (ds, dropped) = Dataset::from_labeled(load_records(dir)?, axis).ctx(dir.display())?;
    if dropped > 0 {
        log::warn!("{}: {dropped} record(s) without a {axis} label dropped", dir.display());
    }
    Ok(ds)
}

pub fn save_records(dir: &Path, records: &[SequenceRecord]) -> CliResult<()> {
    fs::create_dir_all(dir).ctx(dir.display())?;
    let mut fasta = create(&dir.join(RECORDS_FILE))?;
    let mut labels = create(&dir.join(LABELS_FILE))?;
    write_records(records, &mut fasta, &mut labels).ctx(dir.display())?;
    fasta.flush()?;
    labels.flush()?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> CliResult<SplitManifest> {
    SplitManifest::read(open(path)?).ctx(path.display())
}

pub fn save_manifest(path: &Path, manifest: &SplitManifest) -> CliResult<()> {
    let mut out = create(path)?;
    manifest.write(&mut out).ctx(path.display())?;
    out.flush()?;
    Ok(())
}

/// `tcp://host:port` or `cmd:program args...`.
pub fn parse_endpoint(desc: &str, timeout: Duration) -> CliResult<Option<BridgeEndpoint>> {
    if let Some(addr) = desc.strip_prefix("tcp://") {
        return Ok(Some(BridgeEndpoint::tcp(addr, timeout)?));
    }
    if let Some(cmd) = desc.strip_prefix("cmd:") {
        let argv = shlex::split(cmd).ok_or_else(|| CliError::input(format!("cannot split command '{cmd}'")))?;
        return Ok(Some(BridgeEndpoint::child(argv, timeout)?));
    }
    Ok(None)
}

/// An ensemble member: a local model file or a bridged remote model.
pub enum Member {
    Local(TrainedModel),
    Remote(BridgeClient, InputSpec),
}

impl Member {
    pub fn open(
        desc: &str,
        axis: LabelAxis,
        style: MarkerStyle,
        timeout: Duration,
        expected_classes: Option<&[String]>,
    ) -> CliResult<Member> {
        match parse_endpoint(desc, timeout)? {
            Some(ep) => {
                let client = BridgeClient::connect(&ep, expected_classes).ctx(desc)?;
                let spec = match client.capabilities().modality {
                    Modality::Sequence => InputSpec::sequence(axis),
                    Modality::Text => InputSpec::text(axis, style),
                };
                Ok(Member::Remote(client, spec))
            }
            None => {
                let model = TrainedModel::load(desc).ctx(desc)?;
                if model.spec.task_axis != axis {
                    return Err(CliError::integrity(format!(
                        "{desc}: model predicts {}, task axis is {axis}",
                        model.spec.task_axis
                    )));
                }
                Ok(Member::Local(model))
            }
        }
    }

    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            Member::Local(m) => m,
            Member::Remote(c, _) => c,
        }
    }

    pub fn spec(&self) -> &InputSpec {
        match self {
            Member::Local(m) => &m.spec,
            Member::Remote(_, s) => s,
        }
    }
}

/// Gold class indices in `classes` for every record.
pub fn gold_indices(ds: &Dataset, classes: &[String]) -> CliResult<Vec<usize>> {
    (0..ds.len())
        .map(|i| {
            let label = ds.label(i);
            classes.iter().position(|c| c == label).ok_or_else(|| {
                CliError::integrity(format!("record '{}' has class '{label}', unknown to the model", ds.records()[i].id))
            })
        })
        .collect()
}

/// Last path component, for display.
pub fn stem(path: &Path) -> String {
    path.file_stem().or(path.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| PathBuf::from(path).display().to_string())
}
