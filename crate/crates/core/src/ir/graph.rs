use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::ir::registry;
use crate::ir::{AttrValue, Attrs, DType, QuantParams, RoundingMode, TensorValue};

pub type NodeId = usize;

/// Reference to one output of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub node: NodeId,
    pub output: usize,
}

impl Edge {
    pub fn new(node: NodeId) -> Self {
        Edge { node, output: 0 }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.output == 0 {
            write!(f, "%{}", self.node)
        } else {
            write!(f, "%{}.{}", self.node, self.output)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorType {
    pub shape: Vec<usize>,
    pub dtype: DType,
}

impl TensorType {
    pub fn new(shape: Vec<usize>, dtype: DType) -> Self {
        TensorType { shape, dtype }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn size_bytes(&self) -> usize {
        self.numel() * self.dtype.size_bytes()
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", fmt_shape(&self.shape), self.dtype)
    }
}

pub(crate) fn fmt_shape(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join(","))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub op: String,
    pub inputs: Vec<Edge>,
    pub attrs: Attrs,
    pub out_types: Vec<TensorType>,
}

impl Node {
    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        self.attrs.get(name)
    }

    fn missing(&self, name: &str) -> Error {
        Error::attr(self.id, format!("`{}` requires attribute `{name}`", self.op))
    }

    fn wrong_kind(&self, name: &str, want: &str) -> Error {
        Error::attr(self.id, format!("attribute `{name}` must be {want}"))
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        match self.attr(name) {
            Some(AttrValue::Int(v)) => Ok(*v),
            Some(_) => Err(self.wrong_kind(name, "an int")),
            None => Err(self.missing(name)),
        }
    }

    pub fn int_or(&self, name: &str, default: i64) -> Result<i64> {
        if self.attrs.contains_key(name) {
            self.int(name)
        } else {
            Ok(default)
        }
    }

    pub fn float(&self, name: &str) -> Result<f64> {
        match self.attr(name) {
            Some(AttrValue::Float(v)) => Ok(*v),
            Some(AttrValue::Int(v)) => Ok(*v as f64),
            Some(_) => Err(self.wrong_kind(name, "a float")),
            None => Err(self.missing(name)),
        }
    }

    pub fn float_or(&self, name: &str, default: f64) -> Result<f64> {
        if self.attrs.contains_key(name) {
            self.float(name)
        } else {
            Ok(default)
        }
    }

    pub fn string(&self, name: &str) -> Result<&str> {
        match self.attr(name) {
            Some(AttrValue::Str(v)) => Ok(v),
            Some(_) => Err(self.wrong_kind(name, "a string")),
            None => Err(self.missing(name)),
        }
    }

    pub fn ints(&self, name: &str) -> Result<&[i64]> {
        match self.attr(name) {
            Some(AttrValue::Ints(v)) => Ok(v),
            Some(_) => Err(self.wrong_kind(name, "an int list")),
            None => Err(self.missing(name)),
        }
    }

    pub fn ints_or(&self, name: &str, default: &[i64]) -> Result<Vec<i64>> {
        if self.attrs.contains_key(name) {
            Ok(self.ints(name)?.to_vec())
        } else {
            Ok(default.to_vec())
        }
    }

    /// Non-negative int list of a fixed length.
    pub fn usizes_or(&self, name: &str, len: usize, default: usize) -> Result<Vec<usize>> {
        let v = self.ints_or(name, &vec![default as i64; len])?;
        if v.len() != len || v.iter().any(|&x| x < 0) {
            return Err(Error::attr(
                self.id,
                format!("attribute `{name}` must be {len} non-negative ints, got {v:?}"),
            ));
        }
        Ok(v.into_iter().map(|x| x as usize).collect())
    }

    pub fn dtype_attr(&self, name: &str) -> Result<DType> {
        match self.attr(name) {
            Some(AttrValue::DType(v)) => Ok(*v),
            Some(_) => Err(self.wrong_kind(name, "a dtype")),
            None => Err(self.missing(name)),
        }
    }

    pub fn quant(&self, name: &str) -> Result<&QuantParams> {
        match self.attr(name) {
            Some(AttrValue::Quant(v)) => Ok(v),
            Some(_) => Err(self.wrong_kind(name, "quantization parameters")),
            None => Err(self.missing(name)),
        }
    }

    pub fn rounding(&self) -> Result<RoundingMode> {
        match self.attr("rounding") {
            Some(AttrValue::Rounding(v)) => Ok(*v),
            Some(_) => Err(self.wrong_kind("rounding", "a rounding mode")),
            None => Ok(RoundingMode::default()),
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorValue> {
        match self.attr(name) {
            Some(AttrValue::Tensor(v)) => Ok(v),
            Some(_) => Err(self.wrong_kind(name, "a tensor")),
            None => Err(self.missing(name)),
        }
    }

    pub fn out_type(&self) -> &TensorType {
        &self.out_types[0]
    }

    pub fn is_constant(&self) -> bool {
        self.op == "constant"
    }

    pub fn is_input(&self) -> bool {
        self.op == "input"
    }

    pub fn is_qnn(&self) -> bool {
        self.op.starts_with("qnn.")
    }
}

/// A group of nodes executed back to back: an anchor followed by a chain of
/// single-consumer elementwise nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedRegion {
    pub anchor: NodeId,
    pub followers: Vec<NodeId>,
}

impl FusedRegion {
    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::once(self.anchor).chain(self.followers.iter().copied())
    }

    pub fn tail(&self) -> NodeId {
        self.followers.last().copied().unwrap_or(self.anchor)
    }
}

/// Dataflow graph. `nodes` is kept in topological order; graph inputs are the
/// `input` nodes in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub nodes: Vec<Node>,
    pub outputs: Vec<Edge>,
    /// Names under which outputs are reported and serialized.
    pub output_names: Vec<String>,
    pub regions: Vec<FusedRegion>,
    /// Next id a pass may allocate; ids are never reused.
    pub next_id: NodeId,
}

impl Graph {
    pub fn inputs(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_input())
    }

    /// Position of each node id in `nodes`.
    pub fn positions(&self) -> HashMap<NodeId, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i))
            .collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge_type(&self, e: Edge) -> Option<&TensorType> {
        self.node(e.node).and_then(|n| n.out_types.get(e.output))
    }

    /// Number of uses of each node's output, counting graph outputs.
    pub fn use_counts(&self) -> HashMap<NodeId, usize> {
        let mut counts: HashMap<NodeId, usize> = HashMap::new();
        for n in &self.nodes {
            for e in &n.inputs {
                *counts.entry(e.node).or_default() += 1;
            }
        }
        for e in &self.outputs {
            *counts.entry(e.node).or_default() += 1;
        }
        counts
    }

    /// Consumers of each node in topological order (graph outputs excluded).
    pub fn consumers(&self) -> HashMap<NodeId, Vec<NodeId>> {
        let mut map: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for n in &self.nodes {
            for e in &n.inputs {
                let list = map.entry(e.node).or_default();
                if !list.contains(&n.id) {
                    list.push(n.id);
                }
            }
        }
        map
    }

    pub fn count_ops(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.op)).count()
    }

    pub fn region_of(&self, id: NodeId) -> Option<usize> {
        self.regions
            .iter()
            .position(|r| r.members().any(|m| m == id))
    }
}

/// Appends nodes in topological order, inferring each node's output type
/// as it is added.
#[derive(Debug)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    types: HashMap<NodeId, Vec<TensorType>>,
    next_id: NodeId,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            types: HashMap::new(),
            next_id: 0,
        }
    }

    /// Starts a rewrite of `g`: fresh ids continue after `g`'s.
    pub fn continuing(g: &Graph) -> Self {
        GraphBuilder {
            nodes: Vec::with_capacity(g.nodes.len()),
            types: HashMap::new(),
            next_id: g.next_id,
        }
    }

    pub fn ty(&self, e: Edge) -> &TensorType {
        &self.types[&e.node][e.output]
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().rev().find(|n| n.id == id)
    }

    /// Adds a node with a fresh id.
    pub fn push(&mut self, op: &str, inputs: Vec<Edge>, attrs: Attrs) -> Result<Edge> {
        let id = self.next_id;
        self.push_with_id(id, op, inputs, attrs)
    }

    /// Adds a node keeping an id carried over from the graph being rewritten.
    pub fn push_with_id(
        &mut self,
        id: NodeId,
        op: &str,
        inputs: Vec<Edge>,
        attrs: Attrs,
    ) -> Result<Edge> {
        if self.types.contains_key(&id) {
            return Err(Error::InvalidGraph(format!("duplicate node id %{id}")));
        }
        let mut node = Node {
            id,
            op: op.to_string(),
            inputs,
            attrs,
            out_types: vec![],
        };
        let mut in_types = Vec::with_capacity(node.inputs.len());
        for e in &node.inputs {
            let ty = self
                .types
                .get(&e.node)
                .and_then(|t| t.get(e.output))
                .ok_or_else(|| {
                    Error::InvalidGraph(format!(
                        "node %{id} references {e}, which is not defined earlier"
                    ))
                })?;
            in_types.push(ty.clone());
        }
        node.out_types = registry::infer_node(&node, &in_types)?;
        self.types.insert(id, node.out_types.clone());
        self.next_id = self.next_id.max(id + 1);
        self.nodes.push(node);
        Ok(Edge::new(id))
    }

    pub fn input(&mut self, name: &str, shape: Vec<usize>, dtype: DType) -> Result<Edge> {
        let attrs = crate::ir::AttrsBuilder::new()
            .str("name", name)
            .ints("shape", &shape.iter().map(|&d| d as i64).collect::<Vec<_>>())
            .dtype("dtype", dtype)
            .build();
        self.push("input", vec![], attrs)
    }

    pub fn constant(&mut self, value: TensorValue) -> Result<Edge> {
        let mut attrs = Attrs::new();
        attrs.insert("value".into(), AttrValue::Tensor(value));
        self.push("constant", vec![], attrs)
    }

    pub fn const_i32(&mut self, v: i32) -> Result<Edge> {
        self.constant(TensorValue::scalar_i32(v))
    }

    pub fn finish(self, outputs: Vec<Edge>, output_names: Vec<String>) -> Result<Graph> {
        for e in &outputs {
            if !self.types.contains_key(&e.node) {
                return Err(Error::InvalidGraph(format!("output {e} is not defined")));
            }
        }
        let output_names = if output_names.len() == outputs.len() {
            output_names
        } else {
            (0..outputs.len()).map(|i| format!("output{i}")).collect()
        };
        Ok(Graph {
            nodes: self.nodes,
            outputs,
            output_names,
            regions: vec![],
            next_id: self.next_id,
        })
    }
}

/// Rebuilds `g` node by node. `f` sees each node with its operands already
/// remapped into the new graph; returning `Some(edge)` replaces the node's
/// value with `edge`, `None` copies the node under its old id. Fused
/// regions are dropped.
pub fn rewrite<F>(g: &Graph, mut f: F) -> Result<Graph>
where
    F: FnMut(&mut GraphBuilder, &Node, &[Edge]) -> Result<Option<Edge>>,
{
    let mut b = GraphBuilder::continuing(g);
    let mut map: HashMap<NodeId, NodeId> = HashMap::with_capacity(g.nodes.len());
    let remap = |map: &HashMap<NodeId, NodeId>, e: &Edge| -> Result<Edge> {
        map.get(&e.node)
            .map(|&node| Edge { node, output: e.output })
            .ok_or_else(|| Error::InvalidGraph(format!("{e} is used before it is defined")))
    };
    for node in &g.nodes {
        let inputs: Vec<Edge> = node.inputs.iter().map(|e| remap(&map, e)).collect::<Result<_>>()?;
        let new = match f(&mut b, node, &inputs)? {
            Some(e) => e,
            None => b.push_with_id(node.id, &node.op, inputs, node.attrs.clone())?,
        };
        map.insert(node.id, new.node);
    }
    let outputs = g.outputs.iter().map(|e| remap(&map, e)).collect::<Result<_>>()?;
    b.finish(outputs, g.output_names.clone())
}
