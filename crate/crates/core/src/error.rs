use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidSpec(String),

    #[error(
        "component {component} leaves the analytic band: instantaneous frequency {frequency:.5} \
         cycles/sample at n={sample}"
    )]
    OutOfBand {
        component: usize,
        sample: usize,
        frequency: f64,
    },

    #[error("invalid mask {d_nu}x{d_tau} for grid {n}: {reason}")]
    InvalidMask {
        d_nu: usize,
        d_tau: usize,
        n: usize,
        reason: &'static str,
    },

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "objective increased for {streak} consecutive iterations (last at iteration {iteration})"
    )]
    Diverged { iteration: usize, streak: usize },

    #[error("dense oracle limited to n <= {max}, got {n}")]
    OracleTooLarge { n: usize, max: usize },

    #[error("bad magic bytes in weight file: {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported weight file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated weight file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("tensor `{name}` has shape {actual:?}, architecture requires {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("tensor `{0}` contains NaN or infinite values")]
    NonFiniteTensor(String),

    #[error("weight manifest: {0}")]
    Manifest(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in iterate at layer {0}")]
    NonFiniteIterate(usize),

    #[error("reference distribution has zero energy")]
    ZeroReference,

    #[error("dataset must contain at least one sample")]
    EmptyDataset,

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Png(#[from] png::EncodingError),
}

impl Error {
    /// Stable snake_case tag for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::OutOfBand { .. } => "out_of_band",
            Error::InvalidMask { .. } => "invalid_mask",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NegativeThreshold(_) => "negative_threshold",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Diverged { .. } => "diverged",
            Error::OracleTooLarge { .. } => "oracle_too_large",
            Error::BadMagic(_) => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Truncated { .. } => "truncated",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFiniteTensor(_) => "non_finite_tensor",
            Error::Manifest(_) => "manifest",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::NonFiniteIterate(_) => "non_finite_iterate",
            Error::ZeroReference => "zero_reference",
            Error::EmptyDataset => "empty_dataset",
            Error::Experiment(_) => "experiment",
            Error::File { .. } | Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Png(_) => "png",
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
