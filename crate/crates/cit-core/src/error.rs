use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("zero-norm vector at row {row}")]
    ZeroNorm { row: usize },
    #[error("contrastive batch needs at least 2 pairs, got {n}")]
    BatchTooSmall { n: usize },
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("finite-difference oracle produced a non-finite value at coordinate {coord}")]
    Oracle { coord: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("curation starved after {batches} raw batches")]
    CurationStarvation { batches: usize },
    #[error("record source is empty")]
    EmptySource,
    #[error("record source failure: {0}")]
    Source(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
