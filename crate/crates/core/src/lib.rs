pub mod cli;
pub mod error;
pub mod exec;
pub mod frontend;
pub mod ir;
pub mod qnn;
pub mod opt;
pub mod pipeline;
pub mod targets;

pub use error::{Error, Result};
