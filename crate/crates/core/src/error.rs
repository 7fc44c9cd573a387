use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: non-finite value encountered")]
    Numeric { op: &'static str },

    #[error("graph already consumed by backward; run a fresh forward pass first")]
    StaleGraph,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pruning state corrupted: {0}")]
    StateCorruption(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("non-deterministic forward: {0}")]
    Determinism(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
