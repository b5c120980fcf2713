use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ir::{DType, QuantParams, TensorValue};

/// Tie-breaking rule for integer rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RoundingMode {
    /// Ties round away from zero, symmetrically for negative values.
    #[default]
    #[serde(rename = "away")]
    ToNearestAway,
    /// Ties round to the even neighbour.
    #[serde(rename = "even")]
    ToNearestEven,
}

impl RoundingMode {
    pub fn name(self) -> &'static str {
        match self {
            RoundingMode::ToNearestAway => "away",
            RoundingMode::ToNearestEven => "even",
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "away" => Ok(RoundingMode::ToNearestAway),
            "even" => Ok(RoundingMode::ToNearestEven),
            other => Err(format!("unknown rounding mode `{other}` (expected away|even)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Int(i64),
    Float(f64),
    Str(String),
    Ints(Vec<i64>),
    DType(DType),
    Quant(QuantParams),
    Rounding(RoundingMode),
    Tensor(TensorValue),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Int,
    Float,
    Str,
    Ints,
    DType,
    Quant,
    Rounding,
    Tensor,
}

impl AttrValue {
    pub fn kind(&self) -> AttrKind {
        match self {
            AttrValue::Int(_) => AttrKind::Int,
            AttrValue::Float(_) => AttrKind::Float,
            AttrValue::Str(_) => AttrKind::Str,
            AttrValue::Ints(_) => AttrKind::Ints,
            AttrValue::DType(_) => AttrKind::DType,
            AttrValue::Quant(_) => AttrKind::Quant,
            AttrValue::Rounding(_) => AttrKind::Rounding,
            AttrValue::Tensor(_) => AttrKind::Tensor,
        }
    }
}

impl fmt::Display for AttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttrKind::Int => "int",
            AttrKind::Float => "float",
            AttrKind::Str => "string",
            AttrKind::Ints => "int-list",
            AttrKind::DType => "dtype",
            AttrKind::Quant => "quant-params",
            AttrKind::Rounding => "rounding-mode",
            AttrKind::Tensor => "tensor",
        };
        f.write_str(s)
    }
}

/// Attributes in lexicographic key order, which is also the dump order.
pub type Attrs = BTreeMap<String, AttrValue>;

/// Small helper for building attribute maps inline.
#[derive(Default)]
pub struct AttrsBuilder(Attrs);

impl AttrsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn int(mut self, k: &str, v: i64) -> Self {
        self.0.insert(k.into(), AttrValue::Int(v));
        self
    }

    pub fn float(mut self, k: &str, v: f64) -> Self {
        self.0.insert(k.into(), AttrValue::Float(v));
        self
    }

    pub fn str(mut self, k: &str, v: &str) -> Self {
        self.0.insert(k.into(), AttrValue::Str(v.into()));
        self
    }

    pub fn ints(mut self, k: &str, v: &[i64]) -> Self {
        self.0.insert(k.into(), AttrValue::Ints(v.to_vec()));
        self
    }

    pub fn dtype(mut self, k: &str, v: DType) -> Self {
        self.0.insert(k.into(), AttrValue::DType(v));
        self
    }

    pub fn quant(mut self, k: &str, v: QuantParams) -> Self {
        self.0.insert(k.into(), AttrValue::Quant(v));
        self
    }

    pub fn rounding(mut self, k: &str, v: RoundingMode) -> Self {
        self.0.insert(k.into(), AttrValue::Rounding(v));
        self
    }

    pub fn tensor(mut self, k: &str, v: TensorValue) -> Self {
        self.0.insert(k.into(), AttrValue::Tensor(v));
        self
    }

    pub fn build(self) -> Attrs {
        self.0
    }
}
