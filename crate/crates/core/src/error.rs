use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty matrix: {0}")]
    EmptyMatrix(&'static str),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {context} (expected {expected}, got {got})")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("eigenvalue gap below tolerance between components {i} and {j} (relative gap {gap:.3e}); distinct top-k spectrum required")]
    DegenerateSpectrum { i: usize, j: usize, gap: f64 },

    #[error("duplicate top-{k} singular values: entries {i} and {j} coincide")]
    DuplicateSingularValues { k: usize, i: usize, j: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("regularizer invalid: {0}")]
    InvalidRegularizer(String),

    #[error("nested-dropout prior invalid: {0}")]
    InvalidPrior(String),

    #[error("decoder has zero column {0}; cosine alignment undefined")]
    ZeroColumn(usize),

    #[error("matrix is rank-deficient (needs rank {need}, numerical rank {got})")]
    RankDeficient { need: usize, got: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("base point is not stationary: relative gradient norm {grad:.3e} exceeds gate {gate:.1e}")]
    NotStationary { grad: f64, gate: f64 },

    #[error("finite-difference step underflow: eps {eps:.3e} vanishes against parameter scale {scale:.3e}")]
    FdStepUnderflow { eps: f64, scale: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("idx file {path} truncated at byte offset {offset}: needed {needed} more bytes")]
    IdxTruncated {
        path: String,
        offset: usize,
        needed: usize,
    },

    #[error("idx file {path}: bad magic 0x{magic:08x} (expected 0x00000803 image file)")]
    IdxBadMagic { path: String, magic: u32 },

    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
