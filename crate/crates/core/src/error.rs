use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown edge id {0}")]
    UnknownEdge(usize),
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("invalid edge ({u}, {v}, {weight}): {reason}")]
    InvalidEdge {
        u: usize,
        v: usize,
        weight: f64,
        reason: &'static str,
    },
    #[error("vertex set is empty")]
    EmptyVertexSet,
    #[error("graph is disconnected")]
    Disconnected,
    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not SDDM: {0}")]
    NotSddm(String),
    #[error("singular block encountered during elimination")]
    Singular,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contract violation in {stage}: {detail}")]
    ContractViolation { stage: &'static str, detail: String },
    #[error("spanning tree enumeration refused: about {0:e} trees exceeds the guard")]
    TooManyTrees(f64),
    #[error("random walk exceeded {0} steps")]
    WalkTooLong(usize),
    #[error("retry budget of {0} exhausted")]
    RetriesExhausted(usize),
    #[error("no leverage oracle with accuracy {0} or better")]
    AccuracyUnavailable(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
