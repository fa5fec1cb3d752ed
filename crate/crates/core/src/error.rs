use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("rank error in {op}: expected rank {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },
    #[error("alignment error: expected {expected} entries, got {got}")]
    Alignment { expected: usize, got: usize },
    #[error("cannot sample {required} distinct actions, only {available} available")]
    Sampling { required: usize, available: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value at flat index {index} ({context})")]
    Numeric { index: usize, context: String },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
