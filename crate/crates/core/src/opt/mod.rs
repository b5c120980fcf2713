//! Quantization-agnostic graph optimizations run after canonicalization.

mod dce;
mod fold;
mod fuse;

pub use dce::dead_code_elimination;
pub use fold::fold_constants;
pub use fuse::{check_region, fuse_ops, FUSIBLE_FOLLOWERS};
