use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed input {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("subject {subject}: missing network file {path}")]
    MissingNetworkFile { subject: String, path: PathBuf },

    #[error("subject {subject}, network {network}: expected {expected} ROIs, found {found}")]
    RoiCountMismatch {
        subject: String,
        network: String,
        expected: usize,
        found: usize,
    },

    #[error("subject {subject}, network {network}, roi {roi}, timepoint {timepoint}: non-finite sample")]
    NonFiniteSample {
        subject: String,
        network: String,
        roi: usize,
        timepoint: usize,
    },

    #[error("length mismatch in {context}: expected {expected}, found {found}")]
    LengthMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown label {0:?}; expected one of 0/1, class0/class1, HC/MCI")]
    InvalidLabel(String),

    #[error("unknown network {0:?}")]
    UnknownNetwork(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no voxel in region has a defined ReHo value")]
    NoDefinedReho,

    #[error("series too short: need at least {needed} samples, have {len}")]
    SeriesTooShort { needed: usize, len: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("target recurrence rate {0} is outside (0, 1)")]
    InvalidRate(f64),

    #[error("regularized covariance is not positive definite (pivot {index} = {pivot:e})")]
    SingularCovariance { index: usize, pivot: f64 },

    #[error("precision matrix has non-positive diagonal entry {value:e} at {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("eigendecomposition did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e}, frobenius norm {norm:e})")]
    ConvergenceFailure {
        sweeps: usize,
        off_norm: f64,
        norm: f64,
    },

    #[error("empty training data")]
    EmptyData,

    #[error("too few samples: class {class} has {count}, need at least {needed}")]
    TooFewSamples {
        class: u8,
        count: usize,
        needed: usize,
    },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Csv { .. } => "CsvError",
            Error::Malformed { .. } => "Malformed",
            Error::MissingNetworkFile { .. } => "MissingNetworkFile",
            Error::RoiCountMismatch { .. } => "RoiCountMismatch",
            Error::NonFiniteSample { .. } => "NonFiniteSample",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidLabel(_) => "InvalidLabel",
            Error::UnknownNetwork(_) => "UnknownNetwork",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::NoDefinedReho => "NoDefinedReho",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::InvalidParams(_) => "InvalidParams",
            Error::DegenerateSeries(_) => "DegenerateSeries",
            Error::InvalidRate(_) => "InvalidRate",
            Error::SingularCovariance { .. } => "SingularCovariance",
            Error::NonPositiveDiagonal { .. } => "NonPositiveDiagonal",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::EmptyData => "EmptyData",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::Context { source, .. } => source.kind(),
        }
    }

    /// Wraps the error with a location such as `subject s001, network occipital`.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
