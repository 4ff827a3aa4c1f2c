use thiserror::Error;

/// Errors raised by every layer of the pipeline.
///
/// The display strings are part of the command-line contract: the CLI prints
/// them verbatim as its single-line diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples")]
    InsufficientSamples,
    #[error("non-finite input")]
    NonFinite,
    #[error("not symmetric")]
    NotSymmetric,
    #[error("eigendecomposition did not converge")]
    NoConvergence,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty patch")]
    EmptyPatch,
    #[error("unknown channel {0}")]
    UnknownChannel(usize),
    #[error("degenerate unit")]
    DegenerateUnit,
    #[error("window exceeds input")]
    WindowExceedsInput,
    #[error("input too small to pool")]
    InputTooSmallToPool,
    #[error("architecture too deep for input size")]
    ArchitectureTooDeep,
    #[error("input shape differs from training shape")]
    InputShapeDiffers,
    #[error("singular system; set ridge > 0")]
    SingularSystem,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid labels: {0}")]
    Labels(String),
    #[error("not an IDX file")]
    NotIdx,
    #[error("label count mismatch")]
    LabelCountMismatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
