//! Real-valued evaluation of a quantized model, for accuracy comparison.
//!
//! Runs the unexpanded model in f32: quantized inputs are dequantized,
//! constants feeding conv2d/dense weights use their `reference` values,
//! i32 biases are scaled by `scale_in · scale_w`, and every
//! requantization is the identity on real values.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exec::interp::{conv_params, eval_node, TensorMap};
use crate::exec::kernels::{self, ReduceKind};
use crate::ir::registry::pool_window;
use crate::ir::{DType, Graph, Node, NodeId, QuantParams, TensorValue};

fn dequantize(t: &TensorValue, q: Option<&QuantParams>) -> Result<TensorValue> {
    if t.dtype() == DType::F32 {
        return Ok(t.clone());
    }
    let v = t.to_i64().expect("integer tensor");
    let shape = t.shape();
    let out: Vec<f32> = match q {
        None => v.iter().map(|&e| e as f32).collect(),
        Some(q) => {
            let inner: usize = q.axis.map(|a| shape[a + 1..].iter().product()).unwrap_or(1);
            v.iter()
                .enumerate()
                .map(|(i, &e)| {
                    let c = match q.axis {
                        Some(a) => (i / inner) % shape[a],
                        None => 0,
                    };
                    (q.scale_at(c) * (e - q.zero_point_at(c) as i64) as f64) as f32
                })
                .collect()
        }
    };
    TensorValue::from_f32(shape.to_vec(), out)
}

/// Quantization parameters describing a node's output, if it has any.
pub fn output_qparams(node: &Node) -> Option<&QuantParams> {
    match node.op.as_str() {
        "input" => node.quant("qparams").ok(),
        "qnn.avg_pool2d" | "qnn.max_pool2d" | "tflite.quantized_avg_pool" | "tflite.quantized_max_pool" => node.quant("qparams").ok(),
        _ => node.quant("output_qparams").ok(),
    }
}

fn as_f32_node(node: &Node) -> Node {
    let mut n = node.clone();
    for t in &mut n.out_types {
        t.dtype = DType::F32;
    }
    n
}

fn weight_reference(g: &Graph, node: &Node, positions: &HashMap<NodeId, usize>) -> Result<TensorValue> {
    let w = &g.nodes[positions[&node.inputs[1].node]];
    if !w.is_constant() {
        return Err(Error::exec(node.id, "fp32 evaluation needs constant weights"));
    }
    w.tensor("reference")
        .cloned()
        .map_err(|_| Error::exec(node.id, format!("weight %{} has no f32 reference values", w.id)))
}

/// Adds `bias · scale_in · scale_w[k]` along axis 1 and clips to the
/// accumulator bounds expressed in real units.
fn composite_tail(node: &Node, acc: TensorValue, bias: Option<&TensorValue>) -> Result<TensorValue> {
    let in_q = node.quant("input_qparams")?;
    let w_q = node.quant("weight_qparams")?;
    let bias = bias
        .and_then(|b| b.to_i64())
        .ok_or_else(|| Error::attr(node.id, "composite requires an integer bias"))?;
    let lo = node.int_or("out_min", i32::MIN as i64)? as f64;
    let hi = node.int_or("out_max", i32::MAX as i64)? as f64;
    let shape = acc.shape().to_vec();
    let inner: usize = shape[2..].iter().product();
    let out: Vec<f32> = acc
        .as_f32()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = (i / inner) % shape[1];
            let s = in_q.scale() * w_q.scale_at(k);
            ((v as f64 + bias[k] as f64 * s).clamp(lo * s, hi * s)) as f32
        })
        .collect();
    TensorValue::from_f32(shape, out)
}

/// Evaluates `g` (before framework-op expansion) on real values and
/// returns one f32 tensor per graph output.
pub fn run_float_reference(g: &Graph, inputs: &TensorMap) -> Result<Vec<TensorValue>> {
    let positions = g.positions();
    let mut vals: HashMap<NodeId, TensorValue> = HashMap::new();
    for node in &g.nodes {
        let arg = |i: usize| -> &TensorValue { &vals[&node.inputs[i].node] };
        let raw = |i: usize| -> Option<&TensorValue> {
            g.nodes[positions[&node.inputs[i].node]].tensor("value").ok()
        };
        let v = match node.op.as_str() {
            "input" => {
                let name = node.string("name")?;
                let t = inputs.get(name).ok_or_else(|| Error::Unbound(name.to_string()))?;
                if t.shape() != node.out_type().shape.as_slice() || t.dtype() != node.out_type().dtype {
                    return Err(Error::exec(node.id, format!("input `{name}` expects {}", node.out_type())));
                }
                dequantize(t, node.quant("qparams").ok())?
            }
            "constant" => match node.tensor("reference") {
                Ok(r) => r.clone(),
                Err(_) => dequantize(node.tensor("value")?, None)?,
            },
            "qnn.conv2d" | "tflite.quantized_conv2d" => {
                let w = weight_reference(g, node, &positions)?;
                let acc = kernels::conv2d_kernel(arg(0), &w, &conv_params(node, w.shape())?)?;
                if node.op == "qnn.conv2d" {
                    acc
                } else {
                    composite_tail(node, acc, node.inputs.get(2).and_then(|_| raw(2)))?
                }
            }
            "qnn.dense" | "tflite.quantized_dense" => {
                let w = weight_reference(g, node, &positions)?;
                let acc = kernels::matmul_kernel(arg(0), &w)?;
                if node.op == "qnn.dense" {
                    acc
                } else {
                    composite_tail(node, acc, node.inputs.get(2).and_then(|_| raw(2)))?
                }
            }
            "qnn.requantize" | "qnn.quantize" | "qnn.dequantize" | "cast" => arg(0).clone(),
            "qnn.add" | "tflite.quantized_add" => kernels::binary_kernel(kernels::BinaryOp::Add, arg(0), arg(1))?,
            "qnn.avg_pool2d" | "tflite.quantized_avg_pool" => kernels::windowed_reduce_kernel(arg(0), &pool_window(node)?, 0.0, ReduceKind::Avg)?,
            "qnn.max_pool2d" | "tflite.quantized_max_pool" => kernels::windowed_reduce_kernel(arg(0), &pool_window(node)?, 0.0, ReduceKind::Max)?,
            "bias_add" | "clip" => {
                return Err(Error::exec(node.id, format!("`{}` on quantized values has no real-valued meaning here", node.op)));
            }
            _ => {
                let args: Vec<&TensorValue> = node.inputs.iter().map(|e| &vals[&e.node]).collect();
                eval_node(&as_f32_node(node), &args)?
            }
        };
        vals.insert(node.id, v);
    }
    Ok(g.outputs.iter().map(|e| vals[&e.node].clone()).collect())
}

/// Dequantizes graph outputs using the parameters of the nodes that
/// produce them.
pub fn dequantize_outputs(g: &Graph, outputs: &[TensorValue]) -> Result<Vec<TensorValue>> {
    g.outputs
        .iter()
        .zip(outputs)
        .map(|(e, t)| {
            let node = g.node(e.node).expect("output node");
            if t.dtype() == DType::F32 {
                return Ok(t.clone());
            }
            let q = output_qparams(node).ok_or_else(|| {
                Error::exec(node.id, "output has no quantization parameters to dequantize with")
            })?;
            dequantize(t, Some(q))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub max_abs_error: f64,
    /// Fraction of rows (last axis) whose argmax agrees.
    pub top1_agreement: f64,
    pub rows: usize,
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn compare_outputs(quantized: &TensorValue, real: &TensorValue) -> Result<AccuracyReport> {
    let (q, r) = (quantized.as_f32(), real.as_f32());
    let (Some(q), Some(r)) = (q, r) else {
        return Err(Error::Tensor("comparison needs f32 tensors".into()));
    };
    if quantized.shape() != real.shape() {
        return Err(Error::Tensor(format!("shapes {:?} and {:?} differ", quantized.shape(), real.shape())));
    }
    let max_abs_error = q.iter().zip(r).map(|(a, b)| (*a as f64 - *b as f64).abs()).fold(0.0, f64::max);
    let width = quantized.shape().last().copied().unwrap_or(1).max(1);
    let rows = q.len() / width;
    let agree = q
        .chunks(width)
        .zip(r.chunks(width))
        .filter(|(a, b)| argmax(a) == argmax(b))
        .count();
    Ok(AccuracyReport {
        max_abs_error,
        top1_agreement: if rows == 0 { 1.0 } else { agree as f64 / rows as f64 },
        rows,
    })
}
