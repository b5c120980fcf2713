use crate::error::{Error, Result};
use crate::ir::{rewrite, AttrValue, Attrs, AttrsBuilder, Edge, Graph, GraphBuilder, Node};
use crate::qnn::fixed_point::accumulator_qparams;

/// Rewrites every `tflite.*` composite into QNN and base ops.
pub fn expand_framework_ops(g: &Graph) -> Result<Graph> {
    rewrite(g, |b, node, inputs| {
        let e = match node.op.as_str() {
            "tflite.quantized_conv2d" => expand_conv_like(b, node, inputs, "qnn.conv2d", &["strides", "padding", "dilation", "groups"])?,
            "tflite.quantized_dense" => expand_conv_like(b, node, inputs, "qnn.dense", &[])?,
            "tflite.quantized_add" => b.push_with_id(node.id, "qnn.add", inputs.to_vec(), node.attrs.clone())?,
            "tflite.quantized_avg_pool" => b.push_with_id(node.id, "qnn.avg_pool2d", inputs.to_vec(), node.attrs.clone())?,
            "tflite.quantized_max_pool" => b.push_with_id(node.id, "qnn.max_pool2d", inputs.to_vec(), node.attrs.clone())?,
            _ => return Ok(None),
        };
        Ok(Some(e))
    })
}

fn pick(node: &Node, keys: &[&str]) -> Attrs {
    keys.iter()
        .filter_map(|&k| node.attr(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

/// qnn op (i32 accumulator) → bias_add → clip on the accumulator →
/// requantize to the output parameters.
fn expand_conv_like(b: &mut GraphBuilder, node: &Node, inputs: &[Edge], qnn_op: &str, geometry: &[&str]) -> Result<Edge> {
    let Some(&bias) = inputs.get(2) else {
        return Err(Error::attr(node.id, format!("`{}` requires a bias operand", node.op)));
    };
    let in_q = node.quant("input_qparams")?;
    let w_q = node.quant("weight_qparams")?;
    let mut attrs = pick(node, geometry);
    attrs.insert("input_qparams".into(), AttrValue::Quant(in_q.clone()));
    attrs.insert("weight_qparams".into(), AttrValue::Quant(w_q.clone()));
    let acc = b.push(qnn_op, inputs[..2].to_vec(), attrs)?;
    let biased = b.push("bias_add", vec![acc, bias], AttrsBuilder::new().int("axis", 1).build())?;
    let lo = node.int_or("out_min", i32::MIN as i64)?;
    let hi = node.int_or("out_max", i32::MAX as i64)?;
    let clipped = b.push("clip", vec![biased], AttrsBuilder::new().float("a_min", lo as f64).float("a_max", hi as f64).build())?;
    let requant = AttrsBuilder::new()
        .quant("input_qparams", accumulator_qparams(in_q, w_q, 1))
        .quant("output_qparams", node.quant("output_qparams")?.clone())
        .dtype("out_dtype", node.dtype_attr("out_dtype")?)
        .rounding("rounding", node.rounding()?)
        .build();
    b.push_with_id(node.id, "qnn.requantize", vec![clipped], requant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{reference_qnn_interpreter, TensorMap};
    use crate::ir::{dump, DType, QuantParams, TensorValue};

    fn qp(s: f64, z: i32) -> QuantParams {
        QuantParams::per_tensor(s, z).unwrap()
    }

    fn single(op: &str, attrs: Attrs, with_second: bool) -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![1, 2, 4, 4], DType::I8).unwrap();
        let mut args = vec![x];
        if with_second {
            args.push(b.input("z", vec![1, 2, 4, 4], DType::I8).unwrap());
        }
        let y = b.push(op, args, attrs).unwrap();
        b.finish(vec![y], vec!["y".into()]).unwrap()
    }

    #[test]
    fn avg_pool_is_renamed() {
        let attrs = AttrsBuilder::new().ints("pool_size", &[2, 2]).quant("qparams", qp(0.1, 1)).build();
        let g = expand_framework_ops(&single("tflite.quantized_avg_pool", attrs, false)).unwrap();
        let ops: Vec<&str> = g.nodes.iter().map(|n| n.op.as_str()).collect();
        assert_eq!(ops, ["input", "qnn.avg_pool2d"]);
    }

    #[test]
    fn add_is_renamed() {
        let attrs = AttrsBuilder::new()
            .quant("lhs_qparams", qp(0.1, 1))
            .quant("rhs_qparams", qp(0.2, -1))
            .quant("output_qparams", qp(0.3, 0))
            .dtype("out_dtype", DType::I8)
            .build();
        let g = expand_framework_ops(&single("tflite.quantized_add", attrs, true)).unwrap();
        assert_eq!(g.count_ops(|o| o == "qnn.add"), 1);
        assert_eq!(g.nodes.len(), 3);
    }

    #[test]
    fn qnn_only_graph_is_unchanged() {
        let attrs = AttrsBuilder::new().ints("pool_size", &[2, 2]).quant("qparams", qp(0.1, 1)).build();
        let g = single("qnn.max_pool2d", attrs, false);
        assert_eq!(dump(&expand_framework_ops(&g).unwrap()), dump(&g));
    }

    fn dense_composite(with_bias: bool) -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![2, 3], DType::U8).unwrap();
        let w = b.constant(TensorValue::from_i64(vec![4, 3], DType::I8, &[1, -2, 3, 4, 5, -6, 7, 8, 9, -10, 11, 12]).unwrap()).unwrap();
        let mut args = vec![x, w];
        if with_bias {
            args.push(b.constant(TensorValue::from_i64(vec![4], DType::I32, &[100, -50, 0, 7]).unwrap()).unwrap());
        }
        let attrs = AttrsBuilder::new()
            .quant("input_qparams", qp(0.05, 120))
            .quant("weight_qparams", QuantParams::per_channel(vec![0.01, 0.02, 0.03, 0.04], vec![0; 4], 0).unwrap())
            .quant("output_qparams", qp(0.1, -5))
            .dtype("out_dtype", DType::I8)
            .int("out_min", -300)
            .int("out_max", 2000)
            .build();
        let y = b.push("tflite.quantized_dense", args, attrs).unwrap();
        b.finish(vec![y], vec!["y".into()]).unwrap()
    }

    #[test]
    fn dense_expansion_matches_composite_oracle() {
        let g = dense_composite(true);
        let e = expand_framework_ops(&g).unwrap();
        let xs = TensorValue::from_i64(vec![2, 3], DType::U8, &[0, 255, 17, 130, 64, 200]).unwrap();
        let inputs: TensorMap = [("x".to_string(), xs)].into_iter().collect();
        assert_eq!(reference_qnn_interpreter(&g, &inputs).unwrap(), reference_qnn_interpreter(&e, &inputs).unwrap());
    }

    #[test]
    fn missing_bias_is_an_error() {
        assert!(expand_framework_ops(&dense_composite(false)).is_err());
    }
}
