use std::fmt;

use amrkit::augmentation::AugmentationError;
use amrkit::bridge::BridgeError;
use amrkit::dataset::DatasetError;
use amrkit::ensemble::EnsembleError;
use amrkit::metrics::MetricsError;
use amrkit::ontology::OntologyError;
use amrkit::read_sim::ReadSimError;
use amrkit::seq_io::SeqIoError;
use amrkit::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Input = 2,
    Integrity = 3,
    Bridge = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Input, message: message.into() }
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Integrity, message: message.into() }
    }

    pub fn code(&self) -> u8 {
        self.kind as u8
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Prefixes an error with the file it came from.
pub trait Context<T> {
    fn ctx(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn ctx(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| {
            let e = e.into();
            CliError { kind: e.kind, message: format!("{what}: {}", e.message) }
        })
    }
}

fn with(kind: ExitKind, e: impl fmt::Display) -> CliError {
    CliError { kind, message: e.to_string() }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        with(ExitKind::Input, e)
    }
}

impl From<SeqIoError> for CliError {
    fn from(e: SeqIoError) -> Self {
        let kind = match e {
            SeqIoError::DuplicateId(_) => ExitKind::Integrity,
            _ => ExitKind::Input,
        };
        with(kind, e)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::SeqIo(inner) => inner.into(),
            DatasetError::Parse { .. } | DatasetError::Io(_) | DatasetError::BadFractions(_) => with(ExitKind::Input, e),
            _ => with(ExitKind::Integrity, e),
        }
    }
}

impl From<OntologyError> for CliError {
    fn from(e: OntologyError) -> Self {
        let kind = match e {
            OntologyError::ParseError { .. } | OntologyError::Io(_) => ExitKind::Input,
            OntologyError::LookupUnavailable(_) => ExitKind::Bridge,
            _ => ExitKind::Integrity,
        };
        with(kind, e)
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        let kind = match e {
            ClassifierError::InvalidConfig(_) | ClassifierError::Io(_) => ExitKind::Input,
            ClassifierError::Remote(_) => ExitKind::Bridge,
            _ => ExitKind::Integrity,
        };
        with(kind, e)
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Member(inner) => inner.into(),
            EnsembleError::Parse { .. }
            | EnsembleError::Io(_)
            | EnsembleError::InvalidStep(_)
            | EnsembleError::InvalidWeights(_) => with(ExitKind::Input, e),
            _ => with(ExitKind::Integrity, e),
        }
    }
}

impl From<ReadSimError> for CliError {
    fn from(e: ReadSimError) -> Self {
        match e {
            ReadSimError::Dataset(inner) => inner.into(),
            ReadSimError::InvalidProfile(_) => with(ExitKind::Input, e),
            _ => with(ExitKind::Integrity, e),
        }
    }
}

impl From<AugmentationError> for CliError {
    fn from(e: AugmentationError) -> Self {
        match e {
            AugmentationError::Dataset(inner) => inner.into(),
            AugmentationError::UnknownClass(_) => with(ExitKind::Integrity, e),
            _ => with(ExitKind::Input, e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        with(ExitKind::Integrity, e)
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        with(ExitKind::Bridge, e)
    }
}
