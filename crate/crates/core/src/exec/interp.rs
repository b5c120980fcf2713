use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::exec::kernels::{self, BinaryOp, ConvParams, ReduceKind};
use crate::ir::registry::{bias_axis, pool_window, reduce_axes};
use crate::ir::shape::Window2d;
use crate::ir::{Graph, Node, NodeId, TensorValue};
use crate::qnn::fixed_point::FixedPointMultiplier;

/// Named graph inputs (and outputs, when reading results back).
pub type TensorMap = BTreeMap<String, TensorValue>;

/// Evaluates one base-op node on already computed operands.
pub fn eval_node(node: &Node, inputs: &[&TensorValue]) -> Result<TensorValue> {
    let out = eval_base(node, inputs).map_err(|e| e.at_node(node.id))?;
    if let Some(ty) = node.out_types.first() {
        if out.shape() != ty.shape.as_slice() || out.dtype() != ty.dtype {
            return Err(Error::exec(
                node.id,
                format!(
                    "kernel produced ({:?}, {}) but the node is typed {}",
                    out.shape(),
                    out.dtype(),
                    ty
                ),
            ));
        }
    }
    Ok(out)
}

pub(crate) fn conv_params(node: &Node, weight_shape: &[usize]) -> Result<ConvParams> {
    let window = Window2d::from_node(node, [weight_shape[2], weight_shape[3]])?;
    Ok(ConvParams {
        window,
        groups: node.int_or("groups", 1)?.max(1) as usize,
        pad_value: node.float_or("pad_value", 0.0)?,
    })
}

fn eval_base(node: &Node, x: &[&TensorValue]) -> Result<TensorValue> {
    match node.op.as_str() {
        "constant" => Ok(node.tensor("value")?.clone()),
        "input" => Err(Error::exec(node.id, "graph input evaluated without a binding")),
        "add" => kernels::binary_kernel(BinaryOp::Add, x[0], x[1]),
        "subtract" => kernels::binary_kernel(BinaryOp::Subtract, x[0], x[1]),
        "multiply" => kernels::binary_kernel(BinaryOp::Multiply, x[0], x[1]),
        "divide" => kernels::binary_kernel(BinaryOp::Divide(node.rounding()?), x[0], x[1]),
        "bias_add" => kernels::bias_add_kernel(x[0], x[1], bias_axis(node, x[0].shape().len())?),
        "clip" => kernels::clip_kernel(x[0], node.float("a_min")?, node.float("a_max")?),
        "cast" => kernels::cast_kernel(x[0], node.dtype_attr("dtype")?),
        "relu" => kernels::relu_kernel(x[0]),
        "round" => kernels::round_kernel(x[0]),
        "fixed_point_multiply" => {
            let fpms: Vec<FixedPointMultiplier> = node
                .ints("multipliers")?
                .iter()
                .zip(node.ints("shifts")?)
                .map(|(&m, &s)| FixedPointMultiplier {
                    multiplier: m as i32,
                    shift: s as i32,
                })
                .collect();
            let axis = match node.attr("axis") {
                Some(_) => Some(node.int("axis")? as usize),
                None => None,
            };
            kernels::fixed_point_multiply_kernel(x[0], &fpms, axis, node.rounding()?)
        }
        "conv2d" => kernels::conv2d_kernel(x[0], x[1], &conv_params(node, x[1].shape())?),
        "matmul" => kernels::matmul_kernel(x[0], x[1]),
        "sum_pool2d" | "avg_pool2d" | "max_pool2d" => {
            let kind = match node.op.as_str() {
                "sum_pool2d" => ReduceKind::Sum,
                "avg_pool2d" => ReduceKind::Avg,
                _ => ReduceKind::Max,
            };
            let pad = node.float_or("pad_value", 0.0)?;
            kernels::windowed_reduce_kernel(x[0], &pool_window(node)?, pad, kind)
        }
        "reduce_sum" => {
            let axes = reduce_axes(node, x[0].shape().len())?;
            kernels::reduce_sum_kernel(x[0], &axes, node.int_or("keepdims", 0)? != 0)
        }
        "reshape" => {
            let shape = node
                .out_types
                .first()
                .map(|t| t.shape.clone())
                .ok_or_else(|| Error::exec(node.id, "reshape needs inferred types"))?;
            x[0].reshape(shape)
        }
        op if op.starts_with("qnn.") || op.starts_with("tflite.") => Err(Error::exec(
            node.id,
            format!("`{op}` must be canonicalized before execution"),
        )),
        op => Err(Error::UnknownOp {
            node: node.id,
            op: op.to_string(),
        }),
    }
}

/// Input bindings and the per-node output cache for one execution.
pub struct ExecutionContext<'g> {
    graph: &'g Graph,
    cache: HashMap<NodeId, TensorValue>,
}

impl<'g> ExecutionContext<'g> {
    /// Binds every graph input, checking shape and dtype.
    pub fn new(graph: &'g Graph, inputs: &TensorMap) -> Result<Self> {
        let mut cache = HashMap::new();
        for node in graph.inputs() {
            let name = node.string("name")?;
            let value = inputs
                .get(name)
                .ok_or_else(|| Error::Unbound(name.to_string()))?;
            let ty = node.out_type();
            if value.shape() != ty.shape.as_slice() || value.dtype() != ty.dtype {
                return Err(Error::exec(
                    node.id,
                    format!(
                        "input `{name}` expects {ty}, bound value is ({:?}, {})",
                        value.shape(),
                        value.dtype()
                    ),
                ));
            }
            cache.insert(node.id, value.clone());
        }
        Ok(ExecutionContext { graph, cache })
    }

    /// Evaluates every node in order with `eval`. Members of a fused region
    /// are evaluated together when the region's tail is reached, and only
    /// the tail's value is kept.
    pub fn run_with<F>(mut self, eval: F) -> Result<Vec<TensorValue>>
    where
        F: Fn(&Node, &[&TensorValue]) -> Result<TensorValue>,
    {
        let g = self.graph;
        let positions = g.positions();
        let tails: HashMap<NodeId, usize> = g
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| (r.tail(), i))
            .collect();
        for node in &g.nodes {
            if node.is_input() {
                continue;
            }
            if let Some(&r) = tails.get(&node.id) {
                let region = &g.regions[r];
                let mut local: HashMap<NodeId, TensorValue> = HashMap::new();
                for id in region.members() {
                    let member = &g.nodes[positions[&id]];
                    let args: Vec<&TensorValue> = member
                        .inputs
                        .iter()
                        .map(|e| local.get(&e.node).or_else(|| self.cache.get(&e.node)).expect("operand computed"))
                        .collect();
                    let v = eval(member, &args)?;
                    local.insert(id, v);
                }
                let tail = local.remove(&node.id).expect("tail evaluated");
                self.cache.insert(node.id, tail);
                continue;
            }
            if g.region_of(node.id).is_some() {
                continue;
            }
            let args: Vec<&TensorValue> = node
                .inputs
                .iter()
                .map(|e| {
                    self.cache
                        .get(&e.node)
                        .ok_or_else(|| Error::exec(node.id, format!("operand {e} not computed")))
                })
                .collect::<Result<_>>()?;
            let v = eval(node, &args)?;
            self.cache.insert(node.id, v);
        }
        g.outputs
            .iter()
            .map(|e| {
                self.cache
                    .get(&e.node)
                    .cloned()
                    .ok_or_else(|| Error::InvalidGraph(format!("output {e} was not computed")))
            })
            .collect()
    }
}

/// Executes a canonicalized, type-inferred graph.
pub fn run_graph(g: &Graph, inputs: &TensorMap) -> Result<Vec<TensorValue>> {
    ExecutionContext::new(g, inputs)?.run_with(eval_node)
}

/// Same as [`run_graph`] but keyed by the graph's output names.
pub fn run_graph_named(g: &Graph, inputs: &TensorMap) -> Result<TensorMap> {
    let outs = run_graph(g, inputs)?;
    Ok(g.output_names.iter().cloned().zip(outs).collect())
}
