//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what} index {index} out of range (max {max})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sample rank {achieved} is below the requested {requested} components")]
    DegenerateRank { achieved: usize, requested: usize },

    #[error("channel rate is zero; {bits} bits cannot be delivered")]
    Unreachable { bits: u64 },

    #[error("update hook failed at iteration {iteration}: {detail}")]
    HookFailed { iteration: usize, detail: String },

    #[error("prune report does not match profile: {0}")]
    LayerMismatch(String),

    #[error("uncovered configuration: {0}")]
    UncoveredConfiguration(String),

    #[error(
        "no feasible plan among {evaluated} configurations \
         (memory violations: {memory}, accuracy violations: {accuracy}, \
         encoder overhead violations: {overhead})"
    )]
    NoFeasiblePlan {
        evaluated: usize,
        memory: usize,
        accuracy: usize,
        overhead: usize,
    },

    #[error("lookup query out of range: {0}")]
    QueryOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
