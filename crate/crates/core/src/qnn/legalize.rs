//! Rewrites quantized conv2d/dense operands into the dtypes a target's
//! kernels accept. Every rewrite is an exact change of representation.

use crate::error::{Error, Result};
use crate::ir::{rewrite, AttrValue, AttrsBuilder, DType, Edge, Graph, GraphBuilder, Node, QuantParams, RoundingMode, TensorValue};
use crate::targets::{TargetClass, TargetDesc};

pub fn legalize_pass(g: &Graph, target: &TargetDesc) -> Result<Graph> {
    if target.class == TargetClass::Generic {
        return Ok(g.clone());
    }
    rewrite(g, |b, node, inputs| {
        if node.op != "qnn.conv2d" && node.op != "qnn.dense" {
            return Ok(None);
        }
        let edge = match target.class {
            TargetClass::U8S8 => legalize_fixed(b, node, inputs, target, DType::U8, DType::I8)?,
            TargetClass::I8I8 => legalize_fixed(b, node, inputs, target, DType::I8, DType::I8)?,
            TargetClass::I16Upcast => legalize_upcast(b, node, inputs)?,
            TargetClass::Generic => unreachable!(),
        };
        Ok(Some(edge))
    })
}

/// Re-expresses an 8-bit operand in the other 8-bit dtype: same scale,
/// zero point shifted by ±128, emitted as a requantize.
///
/// Per-channel weights share one zero point, so the inserted requantize
/// uses a unit scale on both sides; the multiplier is then exactly 1.
pub fn shift_representation(b: &mut GraphBuilder, x: Edge, q: &QuantParams, to: DType) -> Result<(Edge, QuantParams)> {
    let from = b.ty(x).dtype;
    let delta = match (from, to) {
        (DType::U8, DType::I8) => -128,
        (DType::I8, DType::U8) => 128,
        _ => return Err(Error::Quant(format!("no zero-point shift from {from} to {to}"))),
    };
    let zp = q
        .uniform_zero_point()
        .ok_or_else(|| Error::Quant("per-channel zero points are not supported".into()))?;
    let (in_q, out_q) = if q.is_per_channel() {
        (QuantParams::per_tensor(1.0, zp)?, QuantParams::per_tensor(1.0, zp + delta)?)
    } else {
        (q.clone(), q.with_zero_point(zp + delta))
    };
    let attrs = AttrsBuilder::new()
        .quant("input_qparams", in_q)
        .quant("output_qparams", out_q)
        .dtype("out_dtype", to)
        .rounding("rounding", RoundingMode::ToNearestAway)
        .build();
    let shifted = b.push("qnn.requantize", vec![x], attrs)?;
    Ok((shifted, q.with_zero_point(zp + delta)))
}

fn legalize_fixed(b: &mut GraphBuilder, node: &Node, inputs: &[Edge], target: &TargetDesc, data_to: DType, weight_to: DType) -> Result<Edge> {
    let mut attrs = node.attrs.clone();
    let mut operands = inputs.to_vec();
    for (i, (key, want)) in [("input_qparams", data_to), ("weight_qparams", weight_to)].into_iter().enumerate() {
        let have = b.ty(inputs[i]).dtype;
        if have == want {
            continue;
        }
        if !matches!(have, DType::U8 | DType::I8) {
            return Err(Error::Legalize {
                node: node.id,
                target: target.name.to_string(),
                msg: format!("operand {i} is {have}; {} needs {want}", target.class),
            });
        }
        let (shifted, q) = shift_representation(b, inputs[i], node.quant(key)?, want)?;
        operands[i] = shifted;
        attrs.insert(key.into(), AttrValue::Quant(q));
    }
    b.push_with_id(node.id, &node.op, operands, attrs)
}

/// Widens both operands to i16 and subtracts their zero points, leaving a
/// quantized op with zero zero points.
fn legalize_upcast(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let mut attrs = node.attrs.clone();
    let mut operands = inputs.to_vec();
    for (i, key) in ["input_qparams", "weight_qparams"].into_iter().enumerate() {
        let q = node.quant(key)?;
        let zp = q
            .uniform_zero_point()
            .ok_or_else(|| Error::attr(node.id, "per-channel zero points are not supported"))?;
        let mut x = inputs[i];
        if b.ty(x).dtype != DType::I16 {
            x = b.push("cast", vec![x], AttrsBuilder::new().dtype("dtype", DType::I16).build())?;
        }
        if zp != 0 {
            let c = b.constant(TensorValue::from_i64(vec![], DType::I16, &[zp as i64])?)?;
            x = b.push("subtract", vec![x, c], AttrsBuilder::new().build())?;
        }
        operands[i] = x;
        attrs.insert(key.into(), AttrValue::Quant(q.with_zero_point(0)));
    }
    b.push_with_id(node.id, &node.op, operands, attrs)
}
