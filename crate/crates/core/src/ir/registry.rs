//! Operator registry: arity, attribute schema and type inference per op.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::ir::shape::{broadcast_shapes, Window2d};
use crate::ir::{AttrKind, AttrValue, DType, Node, QuantParams, TensorType};

pub type InferFn = fn(&Node, &[TensorType]) -> Result<TensorType>;

#[derive(Debug, Clone, Copy)]
pub struct AttrSpec {
    pub name: &'static str,
    pub kind: AttrKind,
    pub required: bool,
}

const fn req(name: &'static str, kind: AttrKind) -> AttrSpec {
    AttrSpec {
        name,
        kind,
        required: true,
    }
}

const fn opt(name: &'static str, kind: AttrKind) -> AttrSpec {
    AttrSpec {
        name,
        kind,
        required: false,
    }
}

pub struct OpSignature {
    pub name: &'static str,
    pub min_inputs: usize,
    pub max_inputs: usize,
    pub attrs: &'static [AttrSpec],
    pub infer: InferFn,
    pub is_qnn: bool,
    pub is_elementwise: bool,
}

impl OpSignature {
    pub fn attr_spec(&self, name: &str) -> Option<&AttrSpec> {
        self.attrs.iter().find(|a| a.name == name)
    }

    /// Arity and attribute-schema check for one node.
    pub fn check(&self, node: &Node) -> Result<()> {
        let n = node.inputs.len();
        if n < self.min_inputs || n > self.max_inputs {
            let want = if self.min_inputs == self.max_inputs {
                self.min_inputs.to_string()
            } else {
                format!("{}..={}", self.min_inputs, self.max_inputs)
            };
            return Err(Error::attr(
                node.id,
                format!("`{}` takes {want} inputs, got {n}", self.name),
            ));
        }
        for spec in self.attrs.iter().filter(|a| a.required) {
            if !node.attrs.contains_key(spec.name) {
                return Err(Error::attr(
                    node.id,
                    format!("`{}` requires attribute `{}`", self.name, spec.name),
                ));
            }
        }
        for (name, value) in &node.attrs {
            let spec = self.attr_spec(name).ok_or_else(|| {
                Error::attr(node.id, format!("`{}` has no attribute `{name}`", self.name))
            })?;
            let ok = value.kind() == spec.kind
                || (spec.kind == AttrKind::Float && value.kind() == AttrKind::Int);
            if !ok {
                return Err(Error::attr(
                    node.id,
                    format!("attribute `{name}` must be {}, got {}", spec.kind, value.kind()),
                ));
            }
        }
        Ok(())
    }
}

use AttrKind::*;

const WINDOW: &[AttrSpec] = &[
    req("pool_size", Ints),
    opt("strides", Ints),
    opt("padding", Ints),
    opt("dilation", Ints),
];

const SIGNATURES: &[OpSignature] = &[
    // graph leaves
    sig("input", 0, 0, &[req("name", Str), req("shape", Ints), req("dtype", AttrKind::DType), opt("qparams", Quant)], infer_input),
    sig("constant", 0, 0, &[req("value", Tensor), opt("reference", Tensor)], infer_constant),
    // base elementwise
    ew("add", 2, &[], infer_binary),
    ew("subtract", 2, &[], infer_binary),
    ew("multiply", 2, &[], infer_binary),
    ew("divide", 2, &[opt("rounding", Rounding)], infer_binary),
    ew("bias_add", 2, &[opt("axis", Int)], infer_bias_add),
    ew("clip", 1, &[req("a_min", Float), req("a_max", Float)], infer_same),
    ew("cast", 1, &[req("dtype", AttrKind::DType)], infer_cast),
    ew("relu", 1, &[], infer_same),
    ew("round", 1, &[], infer_round),
    ew(
        "fixed_point_multiply",
        1,
        &[req("multipliers", Ints), req("shifts", Ints), opt("axis", Int), opt("rounding", Rounding)],
        infer_fixed_point_multiply,
    ),
    // base structured
    sig(
        "conv2d",
        2,
        2,
        &[opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), opt("groups", Int), opt("pad_value", Float)],
        infer_conv2d,
    ),
    sig("matmul", 2, 2, &[], infer_matmul),
    sig(
        "sum_pool2d",
        1,
        1,
        &[req("pool_size", Ints), opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), opt("pad_value", Float)],
        infer_sum_pool,
    ),
    sig(
        "avg_pool2d",
        1,
        1,
        &[req("pool_size", Ints), opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), opt("pad_value", Float)],
        infer_pool_same,
    ),
    sig("max_pool2d", 1, 1, WINDOW, infer_pool_same),
    sig("reduce_sum", 1, 1, &[req("axes", Ints), opt("keepdims", Int)], infer_reduce_sum),
    sig("reshape", 1, 1, &[req("newshape", Ints)], infer_reshape),
    // QNN dialect
    qnn("qnn.quantize", 1, 1, &[req("output_qparams", Quant), req("out_dtype", AttrKind::DType)], infer_qnn_quantize),
    qnn("qnn.dequantize", 1, 1, &[req("input_qparams", Quant)], infer_qnn_dequantize),
    qnn(
        "qnn.requantize",
        1,
        1,
        &[req("input_qparams", Quant), req("output_qparams", Quant), req("out_dtype", AttrKind::DType), opt("rounding", Rounding)],
        infer_qnn_requantize,
    ),
    qnn(
        "qnn.conv2d",
        2,
        2,
        &[
            opt("strides", Ints),
            opt("padding", Ints),
            opt("dilation", Ints),
            opt("groups", Int),
            req("input_qparams", Quant),
            req("weight_qparams", Quant),
        ],
        infer_qnn_conv2d,
    ),
    qnn("qnn.dense", 2, 2, &[req("input_qparams", Quant), req("weight_qparams", Quant)], infer_qnn_dense),
    qnn(
        "qnn.add",
        2,
        2,
        &[
            req("lhs_qparams", Quant),
            req("rhs_qparams", Quant),
            req("output_qparams", Quant),
            req("out_dtype", AttrKind::DType),
            opt("rounding", Rounding),
        ],
        infer_qnn_add,
    ),
    qnn(
        "qnn.avg_pool2d",
        1,
        1,
        &[req("pool_size", Ints), opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), req("qparams", Quant)],
        infer_qnn_pool,
    ),
    qnn(
        "qnn.max_pool2d",
        1,
        1,
        &[req("pool_size", Ints), opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), req("qparams", Quant)],
        infer_qnn_pool,
    ),
    // framework-style composites, expanded by the frontend
    sig(
        "tflite.quantized_conv2d",
        2,
        3,
        &[
            opt("strides", Ints),
            opt("padding", Ints),
            opt("dilation", Ints),
            opt("groups", Int),
            req("input_qparams", Quant),
            req("weight_qparams", Quant),
            req("output_qparams", Quant),
            req("out_dtype", AttrKind::DType),
            opt("out_min", Int),
            opt("out_max", Int),
            opt("rounding", Rounding),
        ],
        infer_tflite_conv2d,
    ),
    sig(
        "tflite.quantized_dense",
        2,
        3,
        &[
            req("input_qparams", Quant),
            req("weight_qparams", Quant),
            req("output_qparams", Quant),
            req("out_dtype", AttrKind::DType),
            opt("out_min", Int),
            opt("out_max", Int),
            opt("rounding", Rounding),
        ],
        infer_tflite_dense,
    ),
    sig(
        "tflite.quantized_add",
        2,
        2,
        &[
            req("lhs_qparams", Quant),
            req("rhs_qparams", Quant),
            req("output_qparams", Quant),
            req("out_dtype", AttrKind::DType),
            opt("rounding", Rounding),
        ],
        infer_qnn_add,
    ),
    sig(
        "tflite.quantized_avg_pool",
        1,
        1,
        &[req("pool_size", Ints), opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), req("qparams", Quant)],
        infer_qnn_pool,
    ),
    sig(
        "tflite.quantized_max_pool",
        1,
        1,
        &[req("pool_size", Ints), opt("strides", Ints), opt("padding", Ints), opt("dilation", Ints), req("qparams", Quant)],
        infer_qnn_pool,
    ),
];

const fn sig(
    name: &'static str,
    min_inputs: usize,
    max_inputs: usize,
    attrs: &'static [AttrSpec],
    infer: InferFn,
) -> OpSignature {
    OpSignature {
        name,
        min_inputs,
        max_inputs,
        attrs,
        infer,
        is_qnn: false,
        is_elementwise: false,
    }
}

const fn ew(name: &'static str, arity: usize, attrs: &'static [AttrSpec], infer: InferFn) -> OpSignature {
    OpSignature {
        name,
        min_inputs: arity,
        max_inputs: arity,
        attrs,
        infer,
        is_qnn: false,
        is_elementwise: true,
    }
}

const fn qnn(
    name: &'static str,
    min_inputs: usize,
    max_inputs: usize,
    attrs: &'static [AttrSpec],
    infer: InferFn,
) -> OpSignature {
    OpSignature {
        name,
        min_inputs,
        max_inputs,
        attrs,
        infer,
        is_qnn: true,
        is_elementwise: false,
    }
}

fn table() -> &'static HashMap<&'static str, &'static OpSignature> {
    static TABLE: OnceLock<HashMap<&'static str, &'static OpSignature>> = OnceLock::new();
    TABLE.get_or_init(|| SIGNATURES.iter().map(|s| (s.name, s)).collect())
}

pub fn lookup(op: &str) -> Option<&'static OpSignature> {
    table().get(op).copied()
}

/// Every registered signature, in declaration order.
pub fn all() -> &'static [OpSignature] {
    SIGNATURES
}

pub fn is_framework_op(op: &str) -> bool {
    op.starts_with("tflite.")
}

/// Checks a node against its signature and infers its output types.
pub fn infer_node(node: &Node, inputs: &[TensorType]) -> Result<Vec<TensorType>> {
    let sig = lookup(&node.op).ok_or_else(|| Error::UnknownOp {
        node: node.id,
        op: node.op.clone(),
    })?;
    sig.check(node)?;
    let ty = (sig.infer)(node, inputs).map_err(|e| e.at_node(node.id))?;
    Ok(vec![ty])
}

// ---------------------------------------------------------------------------
// inference rules

fn quant_err(node: &Node, e: Error) -> Error {
    match e {
        Error::Quant(msg) => Error::attr(node.id, msg),
        other => other,
    }
}

fn require_int(node: &Node, ty: &TensorType, what: &str) -> Result<()> {
    if ty.dtype.is_float() {
        return Err(Error::dtype(node.id, format!("{what} must be an integer tensor, got {}", ty.dtype)));
    }
    Ok(())
}

fn require_rank(node: &Node, ty: &TensorType, rank: usize, what: &str) -> Result<()> {
    if ty.shape.len() != rank {
        return Err(Error::shape(
            node.id,
            format!("{what} must have rank {rank}, got shape {:?}", ty.shape),
        ));
    }
    Ok(())
}

fn infer_input(node: &Node, _: &[TensorType]) -> Result<TensorType> {
    let shape = node.ints("shape")?;
    if shape.iter().any(|&d| d < 0) {
        return Err(Error::attr(node.id, "input shape must be non-negative"));
    }
    let shape: Vec<usize> = shape.iter().map(|&d| d as usize).collect();
    if let Some(AttrValue::Quant(q)) = node.attr("qparams") {
        q.check_shape(&shape).map_err(|e| quant_err(node, e))?;
    }
    Ok(TensorType::new(shape, node.dtype_attr("dtype")?))
}

fn infer_constant(node: &Node, _: &[TensorType]) -> Result<TensorType> {
    let v = node.tensor("value")?;
    if let Some(AttrValue::Tensor(r)) = node.attr("reference") {
        if r.dtype() != DType::F32 || r.shape() != v.shape() {
            return Err(Error::attr(
                node.id,
                "reference payload must be f32 with the constant's shape",
            ));
        }
    }
    Ok(TensorType::new(v.shape().to_vec(), v.dtype()))
}

fn infer_binary(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let (a, b) = (&inputs[0], &inputs[1]);
    if a.dtype != b.dtype {
        return Err(Error::dtype(
            node.id,
            format!("`{}` operands differ in dtype: {} vs {}", node.op, a.dtype, b.dtype),
        ));
    }
    let shape = broadcast_shapes(&a.shape, &b.shape).ok_or_else(|| {
        Error::shape(
            node.id,
            format!("cannot broadcast {:?} with {:?}", a.shape, b.shape),
        )
    })?;
    Ok(TensorType::new(shape, a.dtype))
}

pub(crate) fn bias_axis(node: &Node, rank: usize) -> Result<usize> {
    let axis = node.int_or("axis", 1)?;
    let axis = if axis < 0 { axis + rank as i64 } else { axis };
    if axis < 0 || axis as usize >= rank {
        return Err(Error::attr(node.id, format!("axis {axis} out of range for rank {rank}")));
    }
    Ok(axis as usize)
}

fn infer_bias_add(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let (x, b) = (&inputs[0], &inputs[1]);
    let axis = bias_axis(node, x.shape.len())?;
    if x.dtype != b.dtype {
        return Err(Error::dtype(node.id, format!("bias dtype {} differs from data {}", b.dtype, x.dtype)));
    }
    if b.shape != [x.shape[axis]] {
        return Err(Error::shape(
            node.id,
            format!("bias shape {:?} does not match extent {} of axis {axis}", b.shape, x.shape[axis]),
        ));
    }
    Ok(x.clone())
}

fn infer_same(_: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    Ok(inputs[0].clone())
}

fn infer_round(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    if inputs[0].dtype != DType::F32 {
        return Err(Error::dtype(node.id, "round needs an f32 input"));
    }
    Ok(inputs[0].clone())
}

fn infer_cast(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    Ok(TensorType::new(inputs[0].shape.clone(), node.dtype_attr("dtype")?))
}

fn infer_fixed_point_multiply(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let x = &inputs[0];
    if x.dtype != DType::I32 {
        return Err(Error::dtype(node.id, "fixed_point_multiply needs an i32 input"));
    }
    let m = node.ints("multipliers")?;
    let s = node.ints("shifts")?;
    if m.len() != s.len() || m.is_empty() {
        return Err(Error::attr(node.id, "multipliers and shifts must be non-empty and of equal length"));
    }
    if let Some(bad) = m.iter().find(|&&v| !((1i64 << 30)..(1i64 << 31)).contains(&v)) {
        return Err(Error::attr(node.id, format!("multiplier {bad} outside [2^30, 2^31)")));
    }
    match node.attr("axis") {
        Some(_) => {
            let axis = node.int("axis")?;
            let extent = usize::try_from(axis).ok().and_then(|a| x.shape.get(a)).ok_or_else(|| {
                Error::attr(node.id, format!("axis {axis} out of range for {:?}", x.shape))
            })?;
            if *extent != m.len() {
                return Err(Error::attr(
                    node.id,
                    format!("{} multipliers for extent {extent}", m.len()),
                ));
            }
        }
        None if m.len() != 1 => {
            return Err(Error::attr(node.id, "per-tensor fixed_point_multiply takes one multiplier"));
        }
        None => {}
    }
    Ok(x.clone())
}

fn accumulator_dtype(node: &Node, a: DType, b: DType) -> Result<DType> {
    match (a.is_float(), b.is_float()) {
        (true, true) => Ok(DType::F32),
        (false, false) => Ok(DType::I32),
        _ => Err(Error::dtype(node.id, format!("cannot mix {a} and {b} operands"))),
    }
}

/// NCHW data, OIHW weight → NKHW output shape.
pub(crate) fn conv_output_shape(node: &Node, data: &TensorType, weight: &TensorType) -> Result<Vec<usize>> {
    require_rank(node, data, 4, "conv2d data")?;
    require_rank(node, weight, 4, "conv2d weight")?;
    let groups = node.int_or("groups", 1)?;
    if groups < 1 {
        return Err(Error::attr(node.id, "groups must be positive"));
    }
    let groups = groups as usize;
    let (n, c, h, w) = (data.shape[0], data.shape[1], data.shape[2], data.shape[3]);
    let (k, cg, r, s) = (weight.shape[0], weight.shape[1], weight.shape[2], weight.shape[3]);
    if c % groups != 0 || k % groups != 0 || cg * groups != c {
        return Err(Error::shape(
            node.id,
            format!(
                "channel mismatch: data has {c} channels, weight expects {cg} per group with {groups} groups (weight {:?})",
                weight.shape
            ),
        ));
    }
    let win = Window2d::from_node(node, [r, s])?;
    let (oh, ow) = win.output_hw(h, w).ok_or_else(|| {
        Error::shape(
            node.id,
            format!("kernel {r}x{s} does not fit input {h}x{w} with padding {:?}", win.padding),
        )
    })?;
    Ok(vec![n, k, oh, ow])
}

fn infer_conv2d(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let dtype = accumulator_dtype(node, inputs[0].dtype, inputs[1].dtype)?;
    Ok(TensorType::new(conv_output_shape(node, &inputs[0], &inputs[1])?, dtype))
}

fn dense_output_shape(node: &Node, data: &TensorType, weight: &TensorType) -> Result<Vec<usize>> {
    require_rank(node, data, 2, "dense data")?;
    require_rank(node, weight, 2, "dense weight")?;
    if data.shape[1] != weight.shape[1] {
        return Err(Error::shape(
            node.id,
            format!(
                "expected weight with {} input features, got {:?}",
                data.shape[1], weight.shape
            ),
        ));
    }
    Ok(vec![data.shape[0], weight.shape[0]])
}

fn infer_matmul(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let dtype = accumulator_dtype(node, inputs[0].dtype, inputs[1].dtype)?;
    Ok(TensorType::new(dense_output_shape(node, &inputs[0], &inputs[1])?, dtype))
}

pub(crate) fn pool_window(node: &Node) -> Result<Window2d> {
    let k = node.usizes_or("pool_size", 2, 0)?;
    if k.contains(&0) {
        return Err(Error::attr(node.id, "pool window size must be positive"));
    }
    Window2d::from_node(node, [k[0], k[1]])
}

fn pool_shape(node: &Node, x: &TensorType) -> Result<Vec<usize>> {
    require_rank(node, x, 4, "pool input")?;
    let win = pool_window(node)?;
    let (oh, ow) = win.output_hw(x.shape[2], x.shape[3]).ok_or_else(|| {
        Error::shape(
            node.id,
            format!("window {:?} larger than padded input {:?}", win.kernel, x.shape),
        )
    })?;
    Ok(vec![x.shape[0], x.shape[1], oh, ow])
}

fn infer_sum_pool(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let dtype = if inputs[0].dtype.is_float() { DType::F32 } else { DType::I32 };
    Ok(TensorType::new(pool_shape(node, &inputs[0])?, dtype))
}

fn infer_pool_same(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    Ok(TensorType::new(pool_shape(node, &inputs[0])?, inputs[0].dtype))
}

pub(crate) fn reduce_axes(node: &Node, rank: usize) -> Result<Vec<usize>> {
    let mut axes = Vec::new();
    for &a in node.ints("axes")? {
        let a = if a < 0 { a + rank as i64 } else { a };
        if a < 0 || a as usize >= rank {
            return Err(Error::attr(node.id, format!("reduce axis {a} out of range for rank {rank}")));
        }
        if !axes.contains(&(a as usize)) {
            axes.push(a as usize);
        }
    }
    axes.sort_unstable();
    Ok(axes)
}

fn infer_reduce_sum(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let x = &inputs[0];
    let axes = reduce_axes(node, x.shape.len())?;
    let keep = node.int_or("keepdims", 0)? != 0;
    let shape = x
        .shape
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| match (axes.contains(&i), keep) {
            (true, true) => Some(1),
            (true, false) => None,
            (false, _) => Some(d),
        })
        .collect();
    let dtype = if x.dtype.is_float() { DType::F32 } else { DType::I32 };
    Ok(TensorType::new(shape, dtype))
}

fn infer_reshape(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let x = &inputs[0];
    let spec = node.ints("newshape")?;
    let total = x.numel();
    let known: i64 = spec.iter().filter(|&&d| d >= 0).product();
    let wildcards = spec.iter().filter(|&&d| d == -1).count();
    if spec.iter().any(|&d| d < -1) || wildcards > 1 {
        return Err(Error::attr(node.id, format!("invalid newshape {spec:?}")));
    }
    let shape: Vec<usize> = spec
        .iter()
        .map(|&d| {
            if d == -1 {
                if known == 0 { 0 } else { total / known as usize }
            } else {
                d as usize
            }
        })
        .collect();
    if shape.iter().product::<usize>() != total {
        return Err(Error::shape(
            node.id,
            format!("cannot reshape {:?} into {spec:?}", x.shape),
        ));
    }
    Ok(TensorType::new(shape, x.dtype))
}

fn infer_qnn_quantize(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let x = &inputs[0];
    if x.dtype != DType::F32 {
        return Err(Error::dtype(node.id, "qnn.quantize needs an f32 input"));
    }
    node.quant("output_qparams")?
        .check_shape(&x.shape)
        .map_err(|e| quant_err(node, e))?;
    let out = node.dtype_attr("out_dtype")?;
    if out.is_float() {
        return Err(Error::dtype(node.id, "qnn.quantize out_dtype must be an integer type"));
    }
    Ok(TensorType::new(x.shape.clone(), out))
}

fn infer_qnn_dequantize(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let x = &inputs[0];
    require_int(node, x, "qnn.dequantize input")?;
    node.quant("input_qparams")?
        .check_shape(&x.shape)
        .map_err(|e| quant_err(node, e))?;
    Ok(TensorType::new(x.shape.clone(), DType::F32))
}

fn per_tensor<'a>(node: &'a Node, name: &str) -> Result<&'a QuantParams> {
    let q = node.quant(name)?;
    q.check().map_err(|e| quant_err(node, e))?;
    if q.is_per_channel() {
        return Err(Error::attr(node.id, format!("`{name}` must be per-tensor")));
    }
    Ok(q)
}

fn infer_qnn_requantize(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let x = &inputs[0];
    require_int(node, x, "qnn.requantize input")?;
    node.quant("input_qparams")?
        .check_shape(&x.shape)
        .map_err(|e| quant_err(node, e))?;
    let out_q = node.quant("output_qparams")?;
    out_q.check().map_err(|e| quant_err(node, e))?;
    if out_q.is_per_channel() {
        return Err(Error::attr(node.id, "per-channel output scale is not supported"));
    }
    let out = node.dtype_attr("out_dtype")?;
    if out.is_float() {
        return Err(Error::dtype(node.id, "qnn.requantize out_dtype must be an integer type"));
    }
    Ok(TensorType::new(x.shape.clone(), out))
}

fn check_quantized_operand(node: &Node, ty: &TensorType, what: &str) -> Result<()> {
    if !matches!(ty.dtype, DType::I8 | DType::U8 | DType::I16) {
        return Err(Error::dtype(
            node.id,
            format!("{what} must be i8, u8 or i16, got {}", ty.dtype),
        ));
    }
    Ok(())
}

/// Shared checks for the quantized conv2d/dense operand parameters.
fn check_qnn_operands(node: &Node, data: &TensorType, weight: &TensorType, out_channels: usize) -> Result<()> {
    check_quantized_operand(node, data, "data")?;
    check_quantized_operand(node, weight, "weight")?;
    per_tensor(node, "input_qparams")?;
    let wq = node.quant("weight_qparams")?;
    wq.check().map_err(|e| quant_err(node, e))?;
    if let Some(axis) = wq.axis {
        if axis != 0 {
            return Err(Error::attr(node.id, "per-channel weight parameters must use axis 0"));
        }
        if wq.scales.len() != out_channels {
            return Err(Error::attr(
                node.id,
                format!("{} weight scales for {out_channels} output channels", wq.scales.len()),
            ));
        }
        if wq.uniform_zero_point().is_none() {
            return Err(Error::attr(node.id, "per-channel weight zero points are not supported"));
        }
    }
    Ok(())
}

fn check_depthwise(node: &Node, data: &TensorType, weight: &TensorType) -> Result<()> {
    let groups = node.int_or("groups", 1)? as usize;
    if groups != 1 && !(groups == data.shape[1] && weight.shape[0] == groups && weight.shape[1] == 1) {
        return Err(Error::attr(
            node.id,
            "groups must be 1 or equal to the input channels (depthwise, one filter per channel)",
        ));
    }
    Ok(())
}

fn infer_qnn_conv2d(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let shape = conv_output_shape(node, &inputs[0], &inputs[1])?;
    check_depthwise(node, &inputs[0], &inputs[1])?;
    check_qnn_operands(node, &inputs[0], &inputs[1], inputs[1].shape[0])?;
    Ok(TensorType::new(shape, DType::I32))
}

fn infer_qnn_dense(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let shape = dense_output_shape(node, &inputs[0], &inputs[1])?;
    check_qnn_operands(node, &inputs[0], &inputs[1], inputs[1].shape[0])?;
    Ok(TensorType::new(shape, DType::I32))
}

fn infer_qnn_add(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let (a, b) = (&inputs[0], &inputs[1]);
    require_int(node, a, "lhs")?;
    require_int(node, b, "rhs")?;
    for name in ["lhs_qparams", "rhs_qparams", "output_qparams"] {
        per_tensor(node, name)?;
    }
    let shape = broadcast_shapes(&a.shape, &b.shape).ok_or_else(|| {
        Error::shape(node.id, format!("cannot broadcast {:?} with {:?}", a.shape, b.shape))
    })?;
    let out = node.dtype_attr("out_dtype")?;
    if out.is_float() {
        return Err(Error::dtype(node.id, "out_dtype must be an integer type"));
    }
    Ok(TensorType::new(shape, out))
}

fn infer_qnn_pool(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    require_int(node, &inputs[0], "pool input")?;
    per_tensor(node, "qparams")?;
    infer_pool_same(node, inputs)
}

fn check_bias(node: &Node, inputs: &[TensorType], channels: usize) -> Result<()> {
    if let Some(b) = inputs.get(2) {
        if b.dtype != DType::I32 || b.shape != [channels] {
            return Err(Error::shape(
                node.id,
                format!("bias must be i32 of shape [{channels}], got {}", b),
            ));
        }
    }
    Ok(())
}

fn check_composite_output(node: &Node) -> Result<DType> {
    per_tensor(node, "output_qparams")?;
    let out = node.dtype_attr("out_dtype")?;
    if out.is_float() {
        return Err(Error::dtype(node.id, "out_dtype must be an integer type"));
    }
    Ok(out)
}

fn infer_tflite_conv2d(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let shape = conv_output_shape(node, &inputs[0], &inputs[1])?;
    check_depthwise(node, &inputs[0], &inputs[1])?;
    check_qnn_operands(node, &inputs[0], &inputs[1], inputs[1].shape[0])?;
    check_bias(node, inputs, inputs[1].shape[0])?;
    Ok(TensorType::new(shape, check_composite_output(node)?))
}

fn infer_tflite_dense(node: &Node, inputs: &[TensorType]) -> Result<TensorType> {
    let shape = dense_output_shape(node, &inputs[0], &inputs[1])?;
    check_qnn_operands(node, &inputs[0], &inputs[1], inputs[1].shape[0])?;
    check_bias(node, inputs, inputs[1].shape[0])?;
    Ok(TensorType::new(shape, check_composite_output(node)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn names_are_unique_and_qnn_flag_matches_prefix() {
        let mut seen = HashSet::new();
        for s in all() {
            assert!(seen.insert(s.name), "duplicate op {}", s.name);
            assert_eq!(s.is_qnn, s.name.starts_with("qnn."), "{}", s.name);
        }
    }

    #[test]
    fn lookup_unknown() {
        assert!(lookup("qnn.conv2d").is_some());
        assert!(lookup("conv3d").is_none());
    }
}
