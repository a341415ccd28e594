use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("unknown component class `{0}`")]
    UnknownClass(String),

    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("no components")]
    NoComponents,

    #[error("sequence too long: {len} > {max} ({what})")]
    SequenceTooLong {
        what: &'static str,
        len: usize,
        max: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
