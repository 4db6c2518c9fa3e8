use thiserror::Error;

/// Errors raised by the tel-core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed GraphML at line {line}: {message}")]
    MalformedInput { line: u32, message: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown link {0} -> {1}")]
    UnknownLink(String, String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error(
        "residual underflow on {src} -> {dst}: residual {residual} bps cannot carry {rate} bps"
    )]
    ResidualUnderflow {
        src: String,
        dst: String,
        residual: f64,
        rate: f64,
    },
    #[error("{plans} path plans do not fit in a {width}-bit flow_set (capacity {capacity})")]
    FlowSetCapacity {
        plans: usize,
        width: u8,
        capacity: usize,
    },
    #[error("unknown flow_set id {0}")]
    UnknownFlowSet(u32),
    #[error("graph inconsistency: {0}")]
    GraphInconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
