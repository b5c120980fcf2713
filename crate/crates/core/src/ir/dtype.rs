use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Element type of a tensor or graph edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    U8,
    I16,
    I32,
    F32,
}

impl DType {
    pub const ALL: [DType; 5] = [DType::I8, DType::U8, DType::I16, DType::I32, DType::F32];

    pub fn name(self) -> &'static str {
        match self {
            DType::I8 => "i8",
            DType::U8 => "u8",
            DType::I16 => "i16",
            DType::I32 => "i32",
            DType::F32 => "f32",
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            DType::I8 | DType::U8 => 1,
            DType::I16 => 2,
            DType::I32 | DType::F32 => 4,
        }
    }

    pub fn is_integer(self) -> bool {
        !self.is_float()
    }

    pub fn is_float(self) -> bool {
        self == DType::F32
    }

    /// Inclusive representable range. Panics for `f32`.
    pub fn int_range(self) -> (i64, i64) {
        match self {
            DType::I8 => (i8::MIN as i64, i8::MAX as i64),
            DType::U8 => (0, u8::MAX as i64),
            DType::I16 => (i16::MIN as i64, i16::MAX as i64),
            DType::I32 => (i32::MIN as i64, i32::MAX as i64),
            DType::F32 => panic!("f32 has no integer range"),
        }
    }

    pub fn min_value(self) -> i64 {
        self.int_range().0
    }

    pub fn max_value(self) -> i64 {
        self.int_range().1
    }

    pub fn contains(self, v: i64) -> bool {
        let (lo, hi) = self.int_range();
        (lo..=hi).contains(&v)
    }

    pub fn saturate(self, v: i64) -> i64 {
        let (lo, hi) = self.int_range();
        v.clamp(lo, hi)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "i8" => Ok(DType::I8),
            "u8" => Ok(DType::U8),
            "i16" => Ok(DType::I16),
            "i32" => Ok(DType::I32),
            "f32" => Ok(DType::F32),
            other => Err(format!("unknown dtype `{other}`")),
        }
    }
}
