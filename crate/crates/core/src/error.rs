use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty bag")]
    EmptyBag,

    #[error("stratum {0} is empty")]
    EmptyStratum(String),

    #[error("split produced an empty {0} partition")]
    EmptyPartition(&'static str),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("codebook needs {needed} distinct points, found {found}")]
    TooFewDistinct { needed: usize, found: usize },

    #[error("could not place {classes} class means with cosine <= {max_cos} in {dim} dimensions")]
    Separation {
        classes: usize,
        dim: usize,
        max_cos: f64,
    },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("unknown variant {0:?}")]
    UnknownVariant(String),

    #[error("model has no topological stream; patch scores are unavailable for {0}")]
    NoPatchScores(String),

    #[error("no localization ground truth: {0}")]
    NoTruth(String),

    #[error("training diverged: non-finite loss at step {0}")]
    Diverged(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
