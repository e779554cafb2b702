use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("node {node} cannot be a member of its own blanket")]
    NodeInBlanket { node: usize },

    #[error("node index {node} out of range for {d} variables")]
    NodeOutOfRange { node: usize, d: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graphs must differ in exactly one edge, found {0}")]
    NotSingleEdgeDifference(usize),

    #[error("graph is not contained in the search space")]
    NotInSpace,

    #[error("search space has {edges} edges, exhaustive search supports at most {limit}")]
    SpaceTooLarge { edges: usize, limit: usize },

    #[error("candidate budget exceeded: {candidates} Markov blanket candidates, limit is {limit}")]
    CapacityExceeded { candidates: u128, limit: u64 },

    #[error("infeasible assignment: {0}")]
    Infeasible(String),

    #[error("component with {states} joint states exceeds the exact-normalization cap of {limit}")]
    ComponentTooLarge { states: u128, limit: u64 },

    #[error("graph is not chordal")]
    NotChordal,

    #[error("directed graph contains a cycle")]
    Cycle,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
