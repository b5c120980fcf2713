//! Bit-exact reference execution over base ops, plus the oracle interpreter
//! for QNN and framework ops and an f32 evaluator for accuracy reports.

pub mod float_ref;
mod interp;
pub mod kernels;
pub mod reference;

pub use interp::{eval_node, run_graph, run_graph_named, ExecutionContext, TensorMap};
pub use reference::{eval_reference, reference_qnn_interpreter};
