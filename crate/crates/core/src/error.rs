use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be at least 1")]
    InvalidShape([usize; 4]),

    #[error("element count of shape {0:?} overflows usize")]
    ShapeOverflow([usize; 4]),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: [usize; 4], got: [usize; 4] },

    #[error("data length {got} does not match shape element count {expected}")]
    DataLength { expected: usize, got: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("channel mismatch: layer expects {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("spatial extent {h}x{w} too small for kernel {kh}x{kw}")]
    SpatialTooSmall { h: usize, w: usize, kh: usize, kw: usize },

    #[error("spatial extent exhausted: {0}")]
    SpatialExhausted(String),

    #[error("batch-norm axis length {expected} does not match input extent {got}")]
    AxisMismatch { expected: usize, got: usize },

    #[error("backward called without a cached forward pass for {0}")]
    MissingCache(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("descriptor line {line}: {msg}")]
    Descriptor { line: usize, msg: String },

    #[error("not a model file (bad magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("model file truncated while reading {0}")]
    Truncated(String),

    #[error("parameter blob {name} disagrees with architecture: {msg}")]
    BlobMismatch { name: String, msg: String },

    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("reference network {0:?} not present in reports")]
    MissingReference(String),

    #[error("internal parallelism enabled ({0} threads); benchmarks require a single thread")]
    Parallelism(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
