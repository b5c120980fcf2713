//! The fixed compilation pipeline:
//! parse → expand → infer → legalize → canonicalize → fold → fuse → dce.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frontend::{expand_framework_ops, parse_model_raw};
use crate::ir::{infer_types, AttrValue, Graph, RoundingMode};
use crate::opt::{dead_code_elimination, fold_constants, fuse_ops};
use crate::qnn::{canonicalize_pass, legalize_pass};
use crate::targets::TargetDesc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pass {
    Parse,
    Expand,
    Infer,
    Legalize,
    Canonicalize,
    Fold,
    Fuse,
    Dce,
}

impl Pass {
    pub const ALL: [Pass; 8] = [
        Pass::Parse,
        Pass::Expand,
        Pass::Infer,
        Pass::Legalize,
        Pass::Canonicalize,
        Pass::Fold,
        Pass::Fuse,
        Pass::Dce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Parse => "parse",
            Pass::Expand => "expand",
            Pass::Infer => "infer",
            Pass::Legalize => "legalize",
            Pass::Canonicalize => "canonicalize",
            Pass::Fold => "fold",
            Pass::Fuse => "fuse",
            Pass::Dce => "dce",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pass::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPass {
            name: s.to_string(),
            valid: Pass::ALL.map(Pass::name).join(", "),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions<'t> {
    pub target: &'t TargetDesc,
    /// Replaces the rounding mode of every requantize and quantized add.
    pub rounding: Option<RoundingMode>,
}

/// Sets the rounding attribute of every node that requantizes.
pub fn override_rounding(g: &Graph, mode: RoundingMode) -> Graph {
    let mut out = g.clone();
    for node in &mut out.nodes {
        if matches!(node.op.as_str(), "qnn.requantize" | "qnn.add" | "tflite.quantized_conv2d" | "tflite.quantized_dense" | "tflite.quantized_add") {
            node.attrs.insert("rounding".into(), AttrValue::Rounding(mode));
        }
    }
    out
}

fn step(pass: Pass, r: Result<Graph>) -> Result<Graph> {
    r.map_err(|e| Error::Pass {
        pass: pass.name(),
        source: Box::new(e),
    })
}

/// Runs every pass after parsing on `raw`, calling `observe` after each.
pub fn run_pipeline(raw: &Graph, opts: &PipelineOptions, mut observe: impl FnMut(Pass, &Graph)) -> Result<Graph> {
    observe(Pass::Parse, raw);
    let mut g = step(Pass::Expand, expand_framework_ops(raw))?;
    if let Some(mode) = opts.rounding {
        g = override_rounding(&g, mode);
    }
    observe(Pass::Expand, &g);
    g = step(Pass::Infer, infer_types(&g))?;
    observe(Pass::Infer, &g);
    g = step(Pass::Legalize, legalize_pass(&g, opts.target))?;
    observe(Pass::Legalize, &g);
    g = step(Pass::Canonicalize, canonicalize_pass(&g))?;
    observe(Pass::Canonicalize, &g);
    g = step(Pass::Fold, fold_constants(&g))?;
    observe(Pass::Fold, &g);
    g = fuse_ops(&g);
    observe(Pass::Fuse, &g);
    g = dead_code_elimination(&g);
    observe(Pass::Dce, &g);
    Ok(g)
}

/// Parses a model document and compiles it.
pub fn compile_model(bytes: &[u8], opts: &PipelineOptions, observe: impl FnMut(Pass, &Graph)) -> Result<Graph> {
    let raw = step(Pass::Parse, parse_model_raw(bytes))?;
    run_pipeline(&raw, opts, observe)
}
