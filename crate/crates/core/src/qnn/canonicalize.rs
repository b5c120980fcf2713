//! Lowers every QNN op to base ops. After this pass the graph carries no
//! scales or zero points: those are folded into integer constants, casts,
//! clips and fixed-point multiplies.

use crate::error::{Error, Result};
use crate::ir::{rewrite, AttrValue, Attrs, AttrsBuilder, DType, Edge, Graph, GraphBuilder, Node, QuantParams, RoundingMode, TensorValue};
use crate::qnn::fixed_point::{quantize_reciprocal, requantize_multipliers, FixedPointMultiplier};

/// Lowers all `qnn.*` nodes; other nodes are copied unchanged.
pub fn canonicalize_pass(g: &Graph) -> Result<Graph> {
    rewrite(g, |b, node, inputs| {
        if !node.is_qnn() {
            if crate::ir::registry::is_framework_op(&node.op) {
                return Err(Error::NoLowering {
                    node: node.id,
                    op: node.op.clone(),
                });
            }
            return Ok(None);
        }
        let lowered = match node.op.as_str() {
            "qnn.requantize" => canonicalize_requantize(b, node, inputs),
            "qnn.conv2d" => canonicalize_conv2d(b, node, inputs),
            "qnn.dense" => canonicalize_dense(b, node, inputs),
            "qnn.avg_pool2d" => canonicalize_avg_pool(b, node, inputs),
            "qnn.max_pool2d" => canonicalize_max_pool(b, node, inputs),
            "qnn.quantize" => canonicalize_quantize(b, node, inputs),
            "qnn.dequantize" => canonicalize_dequantize(b, node, inputs),
            "qnn.add" => canonicalize_add(b, node, inputs),
            op => Err(Error::NoLowering {
                node: node.id,
                op: op.to_string(),
            }),
        };
        lowered.map(Some)
    })
}

fn empty() -> Attrs {
    Attrs::new()
}

fn cast(b: &mut GraphBuilder, x: Edge, to: DType) -> Result<Edge> {
    if b.ty(x).dtype == to {
        return Ok(x);
    }
    b.push("cast", vec![x], AttrsBuilder::new().dtype("dtype", to).build())
}

fn clip(b: &mut GraphBuilder, x: Edge, lo: f64, hi: f64) -> Result<Edge> {
    b.push("clip", vec![x], AttrsBuilder::new().float("a_min", lo).float("a_max", hi).build())
}

fn binary(b: &mut GraphBuilder, op: &str, x: Edge, y: Edge) -> Result<Edge> {
    b.push(op, vec![x, y], empty())
}

/// A constant laid out to broadcast along `axis` of a rank-`rank` tensor,
/// or a scalar when `axis` is `None`.
fn channel_const_i32(b: &mut GraphBuilder, values: &[i64], rank: usize, axis: Option<usize>) -> Result<Edge> {
    let shape = match axis {
        Some(a) => {
            let mut s = vec![1; rank];
            s[a] = values.len();
            s
        }
        None => vec![],
    };
    b.constant(TensorValue::from_i64(shape, DType::I32, values)?)
}

fn channel_const_f32(b: &mut GraphBuilder, values: Vec<f32>, rank: usize, axis: Option<usize>) -> Result<Edge> {
    let shape = match axis {
        Some(a) => {
            let mut s = vec![1; rank];
            s[a] = values.len();
            s
        }
        None => vec![],
    };
    b.constant(TensorValue::from_f32(shape, values)?)
}

/// Subtracts the (possibly per-channel) zero point of `q` from an i32 edge.
fn subtract_zero_point(b: &mut GraphBuilder, x: Edge, q: &QuantParams) -> Result<Edge> {
    if q.is_symmetric() {
        return Ok(x);
    }
    let rank = b.ty(x).shape.len();
    let zp = match q.uniform_zero_point() {
        Some(z) => channel_const_i32(b, &[z as i64], rank, None)?,
        None => {
            let zps: Vec<i64> = q.zero_points.iter().map(|&z| z as i64).collect();
            channel_const_i32(b, &zps, rank, q.axis)?
        }
    };
    binary(b, "subtract", x, zp)
}

fn is_unit(f: &FixedPointMultiplier) -> bool {
    *f == FixedPointMultiplier {
        multiplier: 1 << 30,
        shift: -1,
    }
}

/// cast → subtract zp_in → fixed-point multiply → add zp_out → clamp → cast.
fn lower_requantize(
    b: &mut GraphBuilder,
    x: Edge,
    in_q: &QuantParams,
    out_q: &QuantParams,
    out_dtype: DType,
    mode: RoundingMode,
) -> Result<Edge> {
    let x = cast(b, x, DType::I32)?;
    let x = subtract_zero_point(b, x, in_q)?;
    let fpms = requantize_multipliers(in_q, out_q)?;
    let x = if fpms.iter().all(is_unit) {
        // m = 1 exactly: the multiply is an identity
        x
    } else {
        let mut attrs = AttrsBuilder::new()
            .ints("multipliers", &fpms.iter().map(|f| f.multiplier as i64).collect::<Vec<_>>())
            .ints("shifts", &fpms.iter().map(|f| f.shift as i64).collect::<Vec<_>>())
            .rounding("rounding", mode);
        if let Some(axis) = in_q.axis {
            attrs = attrs.int("axis", axis as i64);
        }
        b.push("fixed_point_multiply", vec![x], attrs.build())?
    };
    let zp_out = out_q.zero_point();
    let x = if zp_out != 0 {
        let c = b.const_i32(zp_out)?;
        binary(b, "add", x, c)?
    } else {
        x
    };
    if out_dtype == DType::I32 {
        return Ok(x);
    }
    let (lo, hi) = out_dtype.int_range();
    let x = clip(b, x, lo as f64, hi as f64)?;
    cast(b, x, out_dtype)
}

pub fn canonicalize_requantize(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let in_dtype = b.ty(inputs[0]).dtype;
    if !matches!(in_dtype, DType::I8 | DType::U8 | DType::I16 | DType::I32) {
        return Err(Error::dtype(node.id, format!("cannot requantize {in_dtype}")));
    }
    let out_q = node.quant("output_qparams")?;
    if out_q.is_per_channel() {
        return Err(Error::attr(node.id, "per-channel output scale is not supported"));
    }
    lower_requantize(
        b,
        inputs[0],
        node.quant("input_qparams")?,
        out_q,
        node.dtype_attr("out_dtype")?,
        node.rounding()?,
    )
}

/// Zero points of a quantized conv2d/dense: `(zp_input, zp_weight)`.
fn operand_zero_points(node: &Node) -> Result<(i32, i32)> {
    let zp_a = node.quant("input_qparams")?.zero_point();
    let zp_b = node
        .quant("weight_qparams")?
        .uniform_zero_point()
        .ok_or_else(|| Error::attr(node.id, "per-channel weight zero points are not supported"))?;
    Ok((zp_a, zp_b))
}

fn copy_attrs(node: &Node, names: &[&str]) -> Attrs {
    names
        .iter()
        .filter_map(|&k| node.attr(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

/// Combines the four accumulator terms:
/// `Term1 − Term3 + (Term4 − Term2)`, with absent terms elided and the
/// constant pair grouped so it folds.
fn combine_terms(b: &mut GraphBuilder, term1: Edge, term3: Option<Edge>, term2: Option<Edge>, term4: Option<i64>) -> Result<Edge> {
    let mut acc = term1;
    if let Some(t3) = term3 {
        acc = binary(b, "subtract", acc, t3)?;
    }
    match (term2, term4) {
        (Some(t2), Some(t4)) => {
            let t4 = b.constant(TensorValue::from_i64(vec![], DType::I32, &[t4])?)?;
            let folded = binary(b, "subtract", t4, t2)?;
            acc = binary(b, "add", acc, folded)?;
        }
        (Some(t2), None) => acc = binary(b, "subtract", acc, t2)?,
        (None, _) => {}
    }
    Ok(acc)
}

fn check_i32(node: &Node, v: i64, what: &str) -> Result<i64> {
    if DType::I32.contains(v) {
        Ok(v)
    } else {
        Err(Error::Overflow(format!("node %{}: {what} = {v} exceeds i32", node.id)))
    }
}

/// Quantized conv2d as four integer terms:
///
/// ```text
/// Q_C = Σ Q_A·Q_B − zp_A·Σ Q_B − zp_B·Σ Q_A + zp_A·zp_B·C·R·S
/// ```
///
/// Term 1 is an ordinary conv2d whose padding reads `zp_A`. Term 2 reduces
/// the weights over (c, r, s) and is constant for constant weights. Term 3
/// sums the input over channels and then over each window, padding with
/// `C·zp_A`. Term 4 is a scalar.
pub fn canonicalize_conv2d(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let (data, weight) = (inputs[0], inputs[1]);
    let (zp_a, zp_b) = operand_zero_points(node)?;
    let wshape = b.ty(weight).shape.clone();
    let (k, cg, r, s) = (wshape[0], wshape[1], wshape[2], wshape[3]);
    let groups = node.int_or("groups", 1)?;
    let depthwise = groups > 1;

    let mut conv_attrs = copy_attrs(node, &["strides", "padding", "dilation", "groups"]);
    if zp_a != 0 {
        conv_attrs.insert("pad_value".into(), AttrValue::Float(zp_a as f64));
    }
    let term1 = b.push("conv2d", vec![data, weight], conv_attrs)?;

    let term3 = if zp_b != 0 {
        let a = cast(b, data, DType::I32)?;
        let (summed, pad) = if depthwise {
            (a, zp_a as i64)
        } else {
            let reduced = b.push("reduce_sum", vec![a], AttrsBuilder::new().ints("axes", &[1]).int("keepdims", 1).build())?;
            (reduced, check_i32(node, cg as i64 * zp_a as i64, "padding sum")?)
        };
        let mut pool_attrs = copy_attrs(node, &["strides", "padding", "dilation"]);
        pool_attrs.insert("pool_size".into(), AttrValue::Ints(vec![r as i64, s as i64]));
        if pad != 0 {
            pool_attrs.insert("pad_value".into(), AttrValue::Float(pad as f64));
        }
        let windowed = b.push("sum_pool2d", vec![summed], pool_attrs)?;
        let zp = b.const_i32(zp_b)?;
        Some(binary(b, "multiply", windowed, zp)?)
    } else {
        None
    };

    let term2 = if zp_a != 0 {
        let w = cast(b, weight, DType::I32)?;
        let sums = b.push("reduce_sum", vec![w], AttrsBuilder::new().ints("axes", &[1, 2, 3]).build())?;
        let sums = b.push("reshape", vec![sums], AttrsBuilder::new().ints("newshape", &[1, k as i64, 1, 1]).build())?;
        let zp = b.const_i32(zp_a)?;
        Some(binary(b, "multiply", sums, zp)?)
    } else {
        None
    };

    let term4 = if zp_a != 0 && zp_b != 0 {
        Some(check_i32(node, zp_a as i64 * zp_b as i64 * (cg * r * s) as i64, "term 4")?)
    } else {
        None
    };
    combine_terms(b, term1, term3, term2, term4)
}

/// Quantized dense: the conv2d decomposition with unit spatial extents.
pub fn canonicalize_dense(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let (data, weight) = (inputs[0], inputs[1]);
    let (zp_a, zp_b) = operand_zero_points(node)?;
    let in_features = b.ty(weight).shape[1];
    let term1 = b.push("matmul", vec![data, weight], empty())?;
    let term3 = if zp_b != 0 {
        let a = cast(b, data, DType::I32)?;
        let sums = b.push("reduce_sum", vec![a], AttrsBuilder::new().ints("axes", &[1]).int("keepdims", 1).build())?;
        let zp = b.const_i32(zp_b)?;
        Some(binary(b, "multiply", sums, zp)?)
    } else {
        None
    };
    let term2 = if zp_a != 0 {
        let w = cast(b, weight, DType::I32)?;
        let sums = b.push("reduce_sum", vec![w], AttrsBuilder::new().ints("axes", &[1]).build())?;
        let zp = b.const_i32(zp_a)?;
        Some(binary(b, "multiply", sums, zp)?)
    } else {
        None
    };
    let term4 = if zp_a != 0 && zp_b != 0 {
        Some(check_i32(node, zp_a as i64 * zp_b as i64 * in_features as i64, "term 4")?)
    } else {
        None
    };
    combine_terms(b, term1, term3, term2, term4)
}

fn pool_attrs(node: &Node) -> Attrs {
    copy_attrs(node, &["pool_size", "strides", "padding", "dilation"])
}

/// Input and output share scale and zero point, so the pool runs directly
/// on the codes: widen, window-sum, divide with rounding, narrow.
pub fn canonicalize_avg_pool(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let dtype = b.ty(inputs[0]).dtype;
    let win = crate::ir::registry::pool_window(node)?;
    let count = win.window_size();
    if count == 0 {
        return Err(Error::attr(node.id, "window size 0"));
    }
    let zp = node.quant("qparams")?.zero_point();
    let x = if matches!(dtype, DType::I8 | DType::U8) {
        cast(b, inputs[0], DType::I16)?
    } else {
        inputs[0]
    };
    let mut attrs = pool_attrs(node);
    if zp != 0 {
        attrs.insert("pad_value".into(), AttrValue::Float(zp as f64));
    }
    let sum = b.push("sum_pool2d", vec![x], attrs)?;
    let n = b.const_i32(count as i32)?;
    let avg = b.push("divide", vec![sum, n], AttrsBuilder::new().rounding("rounding", RoundingMode::ToNearestAway).build())?;
    if dtype == DType::I32 {
        return Ok(avg);
    }
    let (lo, hi) = dtype.int_range();
    let avg = clip(b, avg, lo as f64, hi as f64)?;
    cast(b, avg, dtype)
}

/// Max commutes with the monotone affine map, so it runs on the codes.
pub fn canonicalize_max_pool(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    b.push("max_pool2d", vec![inputs[0]], pool_attrs(node))
}

/// multiply by 1/scale → round → pre-clamp → i32 → add zp → clamp → cast.
pub fn canonicalize_quantize(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let q = node.quant("output_qparams")?;
    let dtype = node.dtype_attr("out_dtype")?;
    let rank = b.ty(inputs[0]).shape.len();
    let recips: Vec<f32> = q.scales.iter().map(|&s| quantize_reciprocal(s)).collect();
    let recip = if q.is_per_channel() {
        channel_const_f32(b, recips, rank, q.axis)?
    } else {
        channel_const_f32(b, recips, rank, None)?
    };
    let x = binary(b, "multiply", inputs[0], recip)?;
    let x = b.push("round", vec![x], empty())?;
    let (lo, hi) = dtype.int_range();
    let zp_max = *q.zero_points.iter().max().unwrap() as i64;
    let zp_min = *q.zero_points.iter().min().unwrap() as i64;
    let x = clip(b, x, (lo - zp_max) as f64, (hi - zp_min) as f64)?;
    let x = cast(b, x, DType::I32)?;
    let x = if q.is_symmetric() {
        x
    } else {
        let zp = match q.uniform_zero_point() {
            Some(z) => b.const_i32(z)?,
            None => {
                let zps: Vec<i64> = q.zero_points.iter().map(|&z| z as i64).collect();
                channel_const_i32(b, &zps, rank, q.axis)?
            }
        };
        binary(b, "add", x, zp)?
    };
    let x = clip(b, x, lo as f64, hi as f64)?;
    cast(b, x, dtype)
}

/// cast → subtract zp → to f32 → multiply by scale.
pub fn canonicalize_dequantize(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let q = node.quant("input_qparams")?;
    let rank = b.ty(inputs[0]).shape.len();
    let x = cast(b, inputs[0], DType::I32)?;
    let x = subtract_zero_point(b, x, q)?;
    let x = cast(b, x, DType::F32)?;
    let scales: Vec<f32> = q.scales.iter().map(|&s| s as f32).collect();
    let scale = if q.is_per_channel() {
        channel_const_f32(b, scales, rank, q.axis)?
    } else {
        channel_const_f32(b, scales, rank, None)?
    };
    binary(b, "multiply", x, scale)
}

/// Both operands are requantized to the output scale with zero point 0 in
/// i32, summed, shifted by the output zero point and narrowed.
pub fn canonicalize_add(b: &mut GraphBuilder, node: &Node, inputs: &[Edge]) -> Result<Edge> {
    let (lq, rq, oq) = (
        node.quant("lhs_qparams")?,
        node.quant("rhs_qparams")?,
        node.quant("output_qparams")?,
    );
    if lq.is_per_channel() || rq.is_per_channel() {
        return Err(Error::attr(node.id, "qnn.add needs per-tensor inputs"));
    }
    let mode = node.rounding()?;
    let dtype = node.dtype_attr("out_dtype")?;
    let centered = QuantParams::per_tensor(oq.scale(), 0)?;
    let l = lower_requantize(b, inputs[0], lq, &centered, DType::I32, mode)?;
    let r = lower_requantize(b, inputs[1], rq, &centered, DType::I32, mode)?;
    let sum = binary(b, "add", l, r)?;
    let sum = if oq.zero_point() != 0 {
        let zp = b.const_i32(oq.zero_point())?;
        binary(b, "add", sum, zp)?
    } else {
        sum
    };
    if dtype == DType::I32 {
        return Ok(sum);
    }
    let (lo, hi) = dtype.int_range();
    let sum = clip(b, sum, lo as f64, hi as f64)?;
    cast(b, sum, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{reference_qnn_interpreter, run_graph, TensorMap};

    fn qp(scale: f64, zp: i32) -> QuantParams {
        QuantParams::per_tensor(scale, zp).unwrap()
    }

    /// Builds `op(x, consts...)` on one input and returns (lowered, oracle).
    fn lower_and_compare(
        x: TensorValue,
        consts: Vec<TensorValue>,
        op: &str,
        attrs: Attrs,
    ) -> (Graph, TensorValue, TensorValue) {
        let mut b = GraphBuilder::new();
        let inp = b.input("x", x.shape().to_vec(), x.dtype()).unwrap();
        let mut args = vec![inp];
        for c in consts {
            args.push(b.constant(c).unwrap());
        }
        let out = b.push(op, args, attrs).unwrap();
        let g = b.finish(vec![out], vec!["y".into()]).unwrap();
        let inputs: TensorMap = [("x".to_string(), x)].into_iter().collect();
        let oracle = reference_qnn_interpreter(&g, &inputs).unwrap().remove(0);
        let lowered = canonicalize_pass(&g).unwrap();
        assert_eq!(lowered.count_ops(|o| o.starts_with("qnn.")), 0);
        let got = run_graph(&lowered, &inputs).unwrap().remove(0);
        (lowered, got, oracle)
    }

    fn ints(t: &TensorValue) -> Vec<i64> {
        t.to_i64().unwrap()
    }

    #[test]
    fn scalar_asymmetric_conv() {
        // (5 − 2)·(3 − 1) = 6
        let attrs = AttrsBuilder::new().quant("input_qparams", qp(1.0, 2)).quant("weight_qparams", qp(1.0, 1)).build();
        let x = TensorValue::from_i64(vec![1, 1, 1, 1], DType::U8, &[5]).unwrap();
        let w = TensorValue::from_i64(vec![1, 1, 1, 1], DType::U8, &[3]).unwrap();
        let (_, got, oracle) = lower_and_compare(x, vec![w], "qnn.conv2d", attrs);
        assert_eq!(ints(&got), vec![6]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn scalar_asymmetric_dense() {
        let attrs = AttrsBuilder::new().quant("input_qparams", qp(1.0, 2)).quant("weight_qparams", qp(1.0, 1)).build();
        let x = TensorValue::from_i64(vec![1, 1], DType::U8, &[5]).unwrap();
        let w = TensorValue::from_i64(vec![1, 1], DType::U8, &[3]).unwrap();
        let (_, got, oracle) = lower_and_compare(x, vec![w], "qnn.dense", attrs);
        assert_eq!(ints(&got), vec![6]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn symmetric_dense_is_a_single_matmul() {
        let attrs = AttrsBuilder::new().quant("input_qparams", qp(0.5, 0)).quant("weight_qparams", qp(0.25, 0)).build();
        let x = TensorValue::from_i64(vec![1, 2], DType::I8, &[3, -4]).unwrap();
        let w = TensorValue::from_i64(vec![1, 2], DType::I8, &[2, 5]).unwrap();
        let (g, got, oracle) = lower_and_compare(x, vec![w], "qnn.dense", attrs);
        assert_eq!(g.count_ops(|o| o == "matmul"), 1);
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(ints(&got), vec![-14]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn padded_asymmetric_conv_matches_oracle() {
        let attrs = AttrsBuilder::new()
            .ints("padding", &[1, 1, 1, 1])
            .ints("strides", &[2, 1])
            .quant("input_qparams", qp(0.1, 7))
            .quant("weight_qparams", qp(0.2, 3))
            .build();
        let xs: Vec<i64> = (0..2 * 4 * 5).map(|i| (i * 37 % 256) as i64).collect();
        let ws: Vec<i64> = (0..3 * 2 * 3 * 3).map(|i| (i * 11 % 256) as i64).collect();
        let x = TensorValue::from_i64(vec![1, 2, 4, 5], DType::U8, &xs).unwrap();
        let w = TensorValue::from_i64(vec![3, 2, 3, 3], DType::U8, &ws).unwrap();
        let (g, got, oracle) = lower_and_compare(x, vec![w], "qnn.conv2d", attrs);
        assert_eq!(got, oracle);
        assert_eq!(g.count_ops(|o| o == "sum_pool2d"), 1);
    }

    #[test]
    fn symmetric_conv_elides_terms() {
        let attrs = AttrsBuilder::new().quant("input_qparams", qp(0.1, 0)).quant("weight_qparams", qp(0.2, 0)).build();
        let x = TensorValue::zeros(vec![1, 2, 3, 3], DType::I8);
        let w = TensorValue::zeros(vec![2, 2, 3, 3], DType::I8);
        let (g, ..) = lower_and_compare(x, vec![w], "qnn.conv2d", attrs);
        assert_eq!(g.count_ops(|o| o == "conv2d"), 1);
        assert_eq!(g.count_ops(|o| !matches!(o, "conv2d" | "cast" | "input" | "constant")), 0);
    }

    #[test]
    fn avg_pool_rounds_half_away() {
        let attrs = AttrsBuilder::new().ints("pool_size", &[2, 2]).quant("qparams", qp(0.5, 0)).build();
        let x = TensorValue::from_i64(vec![1, 1, 2, 2], DType::U8, &[1, 2, 3, 4]).unwrap();
        let (_, got, oracle) = lower_and_compare(x, vec![], "qnn.avg_pool2d", attrs);
        assert_eq!(ints(&got), vec![3]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn avg_pool_of_saturated_u8() {
        let attrs = AttrsBuilder::new().ints("pool_size", &[3, 3]).quant("qparams", qp(0.5, 0)).build();
        let x = TensorValue::from_i64(vec![1, 1, 3, 3], DType::U8, &[255; 9]).unwrap();
        let (_, got, _) = lower_and_compare(x, vec![], "qnn.avg_pool2d", attrs);
        assert_eq!(ints(&got), vec![255]);
    }

    #[test]
    fn max_pool_on_codes() {
        let attrs = AttrsBuilder::new().ints("pool_size", &[2, 2]).quant("qparams", qp(0.5, 3)).build();
        let x = TensorValue::from_i64(vec![1, 1, 2, 2], DType::I8, &[-5, 9, 0, 2]).unwrap();
        let (_, got, oracle) = lower_and_compare(x, vec![], "qnn.max_pool2d", attrs);
        assert_eq!(ints(&got), vec![9]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn quantize_examples() {
        let q = |v: f32, scale, zp, dt| {
            let attrs = AttrsBuilder::new().quant("output_qparams", qp(scale, zp)).dtype("out_dtype", dt).build();
            let x = TensorValue::from_f32(vec![1], vec![v]).unwrap();
            let (_, got, oracle) = lower_and_compare(x, vec![], "qnn.quantize", attrs);
            assert_eq!(got, oracle);
            ints(&got)[0]
        };
        assert_eq!(q(0.0, 0.5, 10, DType::U8), 10);
        assert_eq!(q(200.0, 0.5, 0, DType::I8), 127);
        assert_eq!(q(-1e30, 0.5, 0, DType::I8), -128);
        assert_eq!(q(0.25, 0.5, 0, DType::I8), 1);
    }

    #[test]
    fn dequantize_example() {
        let attrs = AttrsBuilder::new().quant("input_qparams", qp(0.5, 10)).build();
        let x = TensorValue::from_i64(vec![1], DType::U8, &[12]).unwrap();
        let (_, got, oracle) = lower_and_compare(x, vec![], "qnn.dequantize", attrs);
        assert_eq!(got.as_f32().unwrap(), &[1.0]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn add_examples() {
        let attrs = |out: DType| {
            AttrsBuilder::new()
                .quant("lhs_qparams", qp(0.5, 0))
                .quant("rhs_qparams", qp(0.5, 0))
                .quant("output_qparams", qp(0.5, 0))
                .dtype("out_dtype", out)
                .build()
        };
        // 1.0 + 1.0 at scale 0.5
        let x = TensorValue::from_i64(vec![1], DType::I8, &[2]).unwrap();
        let c = TensorValue::from_i64(vec![1], DType::I8, &[2]).unwrap();
        let (g, got, oracle) = lower_and_compare(x, vec![c], "qnn.add", attrs(DType::I8));
        assert_eq!(ints(&got), vec![4]);
        assert_eq!(got, oracle);
        assert_eq!(g.count_ops(|o| o == "fixed_point_multiply"), 0);

        let x = TensorValue::from_i64(vec![2], DType::I8, &[100, -100]).unwrap();
        let c = TensorValue::from_i64(vec![2], DType::I8, &[100, -100]).unwrap();
        let (_, got, _) = lower_and_compare(x, vec![c], "qnn.add", attrs(DType::I8));
        assert_eq!(ints(&got), vec![127, -128]);
    }

    #[test]
    fn requantize_identity_is_clamp_only() {
        let attrs = AttrsBuilder::new()
            .quant("input_qparams", qp(0.5, 0))
            .quant("output_qparams", qp(0.5, 0))
            .dtype("out_dtype", DType::I8)
            .build();
        let x = TensorValue::from_i64(vec![3], DType::I32, &[-1000, 5, 1000]).unwrap();
        let (g, got, oracle) = lower_and_compare(x, vec![], "qnn.requantize", attrs);
        assert_eq!(ints(&got), vec![-128, 5, 127]);
        assert_eq!(got, oracle);
        assert_eq!(g.count_ops(|o| o == "fixed_point_multiply"), 0);
    }

    #[test]
    fn requantize_halves() {
        let attrs = AttrsBuilder::new()
            .quant("input_qparams", qp(0.5, 0))
            .quant("output_qparams", qp(1.0, 0))
            .dtype("out_dtype", DType::I32)
            .rounding("rounding", RoundingMode::ToNearestEven)
            .build();
        let x = TensorValue::from_i64(vec![4], DType::I32, &[10, 3, 5, -5]).unwrap();
        let (_, got, oracle) = lower_and_compare(x, vec![], "qnn.requantize", attrs);
        assert_eq!(ints(&got), vec![5, 2, 2, -2]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn graph_without_qnn_ops_is_unchanged() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![2], DType::I32).unwrap();
        let y = b.push("relu", vec![x], Attrs::new()).unwrap();
        let g = b.finish(vec![y], vec![]).unwrap();
        assert_eq!(crate::ir::dump(&canonicalize_pass(&g).unwrap()), crate::ir::dump(&g));
    }
}
