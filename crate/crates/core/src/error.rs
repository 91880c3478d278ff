use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid argument to {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,
    #[error("parameter {index} is trainable but has no gradient")]
    MissingGradient { index: usize },
    #[error("incompatible layer chain at layer {layer}: {reason}")]
    IncompatibleLayers { layer: usize, reason: String },
    #[error("split constraint violated: {0}")]
    SplitConstraint(String),
    #[error("class count mismatch: cloud spec has {cloud}, co spec has {co}")]
    ClassCountMismatch { cloud: usize, co: usize },
    #[error("phase contract violated: {0}")]
    PhaseContract(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checkpoint spec digest mismatch")]
    DigestMismatch,
    #[error("unknown method: {0}")]
    UnknownMethod(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
