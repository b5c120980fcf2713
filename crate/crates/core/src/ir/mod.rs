//! Graph intermediate representation: tensors, quantization parameters,
//! nodes, the operator registry, validation and type inference.

mod attr;
mod dtype;
mod graph;
mod printer;
mod quant;
pub mod registry;
pub mod shape;
mod tensor;
mod validate;

pub use attr::{AttrKind, AttrValue, Attrs, AttrsBuilder, RoundingMode};
pub use dtype::DType;
pub use graph::{rewrite, Edge, FusedRegion, Graph, GraphBuilder, Node, NodeId, TensorType};
pub use printer::{dump, fmt_attr};
pub use quant::QuantParams;
pub use tensor::{numel, Buffer, TensorValue};
pub use validate::{infer_types, validate_graph, Diagnostic, ValidationReport};
