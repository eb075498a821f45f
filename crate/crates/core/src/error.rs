use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}; {diagnostic}")]
    Diverged { epoch: usize, batch: usize, loss: f64, diagnostic: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}

/// Problems with drive-cycle telemetry and its derived artefacts.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{source_name}: file is empty")]
    Empty { source_name: String },

    #[error("{source_name}: missing column `{column}`")]
    MissingColumn { source_name: String, column: &'static str },

    #[error("{source_name}: row {row}, column `{column}`: cannot parse {value:?} as a number")]
    NonNumeric { source_name: String, row: usize, column: &'static str, value: String },

    #[error("{source_name}: row {row}, column `{column}`: value {value} is not finite")]
    NonFinite { source_name: String, row: usize, column: &'static str, value: f64 },

    #[error("{source_name}: row {row} has {found} fields, expected {expected}")]
    LengthMismatch { source_name: String, row: usize, found: usize, expected: usize },

    #[error("{source_name}: row {row}: soc {value} outside [0, 1]")]
    SocOutOfRange { source_name: String, row: usize, value: f64 },

    #[error("{source_name}: malformed CSV: {message}")]
    Csv { source_name: String, message: String },

    #[error("channel `{channel}` is constant ({value}) across the training cycles")]
    DegenerateChannel { channel: &'static str, value: f64 },

    #[error("split configuration: {0}")]
    Split(String),

    #[error("cannot infer cycle name and ambient temperature from file name {0:?}; expected <CYCLE>_<TEMP>C.csv")]
    FileName(String),

    #[error("leakage guard: {0}")]
    Leakage(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("unsupported checkpoint format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("checkpoint malformed: {0}")]
    Malformed(String),
}
