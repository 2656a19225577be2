use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("simulation already finished")]
    Finished,

    #[error("non-termination suspected: step cap of {cap} exceeded")]
    StepCapExceeded { cap: u64 },

    #[error("schedule enumeration exceeded {0} complete runs")]
    ExplorationLimit(usize),

    #[error("backbone is not a tree")]
    NotATree,

    #[error("invalid protocol descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("invalid codec: {0}")]
    InvalidCodec(String),

    #[error("could not generate a connected graph after {0} attempts")]
    RetriesExhausted(usize),

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("nothing to report")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
