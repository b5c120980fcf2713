//! Built-in target descriptors. A target only names the dtype constraint
//! class its quantized conv2d/dense kernels need.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetClass {
    /// u8 activations × i8 weights.
    U8S8,
    /// i8 × i8.
    I8I8,
    /// Both operands widened to i16 with zero points pre-subtracted.
    I16Upcast,
    Generic,
}

impl TargetClass {
    pub fn name(self) -> &'static str {
        match self {
            TargetClass::U8S8 => "u8s8",
            TargetClass::I8I8 => "i8i8",
            TargetClass::I16Upcast => "i16upcast",
            TargetClass::Generic => "generic",
        }
    }
}

impl fmt::Display for TargetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetDesc {
    pub name: &'static str,
    pub class: TargetClass,
    pub notes: &'static str,
}

static TARGETS: [TargetDesc; 4] = [
    TargetDesc {
        name: "x86-vnni",
        class: TargetClass::U8S8,
        notes: "VNNI dot products take unsigned 8-bit data and signed 8-bit weights",
    },
    TargetDesc {
        name: "cuda-dp4a",
        class: TargetClass::I8I8,
        notes: "DP4A takes signed 8-bit operands on both sides",
    },
    TargetDesc {
        name: "armv8",
        class: TargetClass::I16Upcast,
        notes: "widen to int16 and accumulate with vmlal",
    },
    TargetDesc {
        name: "generic",
        class: TargetClass::Generic,
        notes: "no dtype constraints",
    },
];

pub fn builtin_targets() -> &'static [TargetDesc] {
    &TARGETS
}

pub fn lookup_target(name: &str) -> Result<&'static TargetDesc> {
    TARGETS.iter().find(|t| t.name == name).ok_or_else(|| Error::UnknownTarget {
        name: name.to_string(),
        available: TARGETS.iter().map(|t| t.name).collect::<Vec<_>>().join(", "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        assert_eq!(lookup_target("x86-vnni").unwrap().class, TargetClass::U8S8);
        assert_eq!(lookup_target("cuda-dp4a").unwrap().class, TargetClass::I8I8);
        assert_eq!(lookup_target("armv8").unwrap().class, TargetClass::I16Upcast);
        assert_eq!(lookup_target("generic").unwrap().class, TargetClass::Generic);
    }

    #[test]
    fn unknown_target_lists_builtins() {
        let msg = lookup_target("riscv").unwrap_err().to_string();
        for t in ["x86-vnni", "cuda-dp4a", "armv8", "generic"] {
            assert!(msg.contains(t), "{msg}");
        }
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<_> = TARGETS.iter().map(|t| t.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), TARGETS.len());
    }
}
