use crate::ir::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("node %{node}: shape error: {msg}")]
    Shape { node: NodeId, msg: String },

    #[error("node %{node}: unknown op `{op}`")]
    UnknownOp { node: NodeId, op: String },

    #[error("node %{node}: attribute error: {msg}")]
    Attr { node: NodeId, msg: String },

    #[error("node %{node}: dtype error: {msg}")]
    DType { node: NodeId, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("invalid quantization parameters: {0}")]
    Quant(String),

    #[error("invalid fixed-point multiplier input: {0}")]
    FixedPoint(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("malformed document at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("model error at node `{node}`: {msg}")]
    Model { node: String, msg: String },

    #[error("node %{node}: {msg}")]
    Exec { node: NodeId, msg: String },

    #[error("graph input `{0}` is not bound")]
    Unbound(String),

    #[error("node %{node}: cannot legalize for target `{target}`: {msg}")]
    Legalize {
        node: NodeId,
        target: String,
        msg: String,
    },

    #[error("node %{node}: no lowering for `{op}`")]
    NoLowering { node: NodeId, op: String },

    #[error("unknown target `{name}` (available: {available})")]
    UnknownTarget { name: String, available: String },

    #[error("pass `{pass}` failed: {source}")]
    Pass {
        pass: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown pass `{name}` (valid passes: {valid})")]
    UnknownPass { name: String, valid: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn exec(node: NodeId, msg: impl Into<String>) -> Self {
        Error::Exec {
            node,
            msg: msg.into(),
        }
    }

    pub(crate) fn attr(node: NodeId, msg: impl Into<String>) -> Self {
        Error::Attr {
            node,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(node: NodeId, msg: impl Into<String>) -> Self {
        Error::Shape {
            node,
            msg: msg.into(),
        }
    }

    pub(crate) fn dtype(node: NodeId, msg: impl Into<String>) -> Self {
        Error::DType {
            node,
            msg: msg.into(),
        }
    }

    /// Rewrites a node-less error so it names the node being evaluated.
    pub(crate) fn at_node(self, node: NodeId) -> Self {
        match self {
            Error::Tensor(msg) | Error::Overflow(msg) | Error::Quant(msg) => {
                Error::Exec { node, msg }
            }
            Error::FixedPoint(msg) => Error::Exec {
                node,
                msg: format!("fixed-point multiplier: {msg}"),
            },
            other => other,
        }
    }
}
