//! Native model and tensor file formats, and expansion of framework-style
//! composite operators into the QNN dialect.

mod expand;
mod model;
mod tensor_file;

pub use expand::expand_framework_ops;
pub use model::{parse_model, parse_model_raw, write_model, ModelFile, NodeEntry, InputEntry, Payload};
pub use tensor_file::{load_tensor_file, save_tensor_file, TensorFile};
