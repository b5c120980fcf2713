//! The QNN dialect: fixed-point requantization math, the Canonicalize pass
//! that lowers QNN ops to base ops, and the target-driven Legalize pass.

pub mod fixed_point;

pub use crate::ir::RoundingMode;
pub use fixed_point::{apply_fixed_point, derive_fixed_point_multiplier, FixedPointMultiplier};
pub mod canonicalize;
pub mod legalize;

pub use canonicalize::canonicalize_pass;
pub use legalize::legalize_pass;
