use std::collections::{BTreeMap, HashMap, HashSet};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::frontend::expand::expand_framework_ops;
use crate::ir::registry;
use crate::ir::{infer_types, AttrKind, AttrValue, Attrs, DType, Edge, Graph, GraphBuilder, NodeId, QuantParams, RoundingMode, TensorValue};

/// Raw tensor bytes: little-endian, row-major, base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data: String,
}

impl Payload {
    pub fn encode(t: &TensorValue) -> Self {
        Payload {
            dtype: t.dtype().name().to_string(),
            shape: t.shape().to_vec(),
            data: B64.encode(t.to_le_bytes()),
        }
    }

    pub fn decode(&self) -> std::result::Result<TensorValue, String> {
        let dtype = self.dtype.parse::<DType>().map_err(|e| e.to_string())?;
        let bytes = B64.decode(&self.data).map_err(|e| format!("payload is not base64: {e}"))?;
        TensorValue::from_le_bytes(self.shape.clone(), dtype, &bytes).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qparams: Option<QuantParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeEntry {
    pub name: String,
    pub op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Payload>,
    /// Real-valued weights a constant was quantized from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Payload>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    #[serde(default)]
    pub inputs: Vec<InputEntry>,
    pub nodes: Vec<NodeEntry>,
    pub outputs: Vec<String>,
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    }
}

fn model_err(node: &str, msg: impl Into<String>) -> Error {
    Error::Model {
        node: node.to_string(),
        msg: msg.into(),
    }
}

/// Scales are stored at f32 precision, as framework models store them.
fn normalize_quant(mut q: QuantParams) -> QuantParams {
    for s in &mut q.scales {
        *s = *s as f32 as f64;
    }
    q
}

fn attr_from_json(node: &str, key: &str, kind: AttrKind, v: &Value) -> Result<AttrValue> {
    let bad = || model_err(node, format!("attribute `{key}` must be {kind}, got {v}"));
    Ok(match kind {
        AttrKind::Int => AttrValue::Int(v.as_i64().ok_or_else(bad)?),
        AttrKind::Float => AttrValue::Float(v.as_f64().ok_or_else(bad)?),
        AttrKind::Str => AttrValue::Str(v.as_str().ok_or_else(bad)?.to_string()),
        AttrKind::Ints => AttrValue::Ints(
            v.as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_i64().ok_or_else(bad))
                .collect::<Result<_>>()?,
        ),
        AttrKind::DType => AttrValue::DType(v.as_str().ok_or_else(bad)?.parse().map_err(|e: String| model_err(node, e))?),
        AttrKind::Rounding => {
            AttrValue::Rounding(v.as_str().ok_or_else(bad)?.parse::<RoundingMode>().map_err(|e| model_err(node, e))?)
        }
        AttrKind::Quant => {
            let q: QuantParams = serde_json::from_value(v.clone()).map_err(|e| model_err(node, format!("attribute `{key}`: {e}")))?;
            q.check().map_err(|e| model_err(node, format!("attribute `{key}`: {e}")))?;
            AttrValue::Quant(normalize_quant(q))
        }
        AttrKind::Tensor => {
            let p: Payload = serde_json::from_value(v.clone()).map_err(|e| model_err(node, format!("attribute `{key}`: {e}")))?;
            AttrValue::Tensor(p.decode().map_err(|e| model_err(node, e))?)
        }
    })
}

fn attr_to_json(v: &AttrValue) -> Value {
    match v {
        AttrValue::Int(i) => Value::from(*i),
        AttrValue::Float(f) => Value::from(*f),
        AttrValue::Str(s) => Value::from(s.as_str()),
        AttrValue::Ints(v) => Value::from(v.clone()),
        AttrValue::DType(d) => Value::from(d.name()),
        AttrValue::Rounding(r) => Value::from(r.name()),
        AttrValue::Quant(q) => serde_json::to_value(q).expect("quant params serialize"),
        AttrValue::Tensor(t) => serde_json::to_value(Payload::encode(t)).expect("payload serializes"),
    }
}

/// Parses a model document into a validated, type-inferred graph, keeping
/// framework composite ops as written.
pub fn parse_model_raw(bytes: &[u8]) -> Result<Graph> {
    let file: ModelFile = serde_json::from_slice(bytes).map_err(json_error)?;
    build_graph(&file)
}

/// Parses a model and expands its framework composite ops.
pub fn parse_model(bytes: &[u8]) -> Result<Graph> {
    let raw = parse_model_raw(bytes)?;
    infer_types(&expand_framework_ops(&raw)?)
}

fn build_graph(file: &ModelFile) -> Result<Graph> {
    if file.version != 1 {
        return Err(model_err("", format!("unsupported model version {}", file.version)));
    }
    let mut b = GraphBuilder::new();
    let mut names: HashMap<&str, Edge> = HashMap::new();
    let wrap = |name: &str, e: Error| match e {
        e @ Error::Model { .. } => e,
        e => model_err(name, e.to_string()),
    };
    for inp in &file.inputs {
        if names.contains_key(inp.name.as_str()) {
            return Err(model_err(&inp.name, "duplicate name"));
        }
        let dtype: DType = inp.dtype.parse().map_err(|e: String| model_err(&inp.name, e))?;
        let mut attrs = Attrs::new();
        attrs.insert("name".into(), AttrValue::Str(inp.name.clone()));
        attrs.insert("shape".into(), AttrValue::Ints(inp.shape.iter().map(|&d| d as i64).collect()));
        attrs.insert("dtype".into(), AttrValue::DType(dtype));
        if let Some(q) = &inp.qparams {
            q.check().map_err(|e| wrap(&inp.name, e))?;
            attrs.insert("qparams".into(), AttrValue::Quant(normalize_quant(q.clone())));
        }
        let e = b.push("input", vec![], attrs).map_err(|e| wrap(&inp.name, e))?;
        names.insert(&inp.name, e);
    }
    for n in &file.nodes {
        if names.contains_key(n.name.as_str()) {
            return Err(model_err(&n.name, "duplicate name"));
        }
        let sig = registry::lookup(&n.op).ok_or_else(|| model_err(&n.name, format!("unknown op `{}`", n.op)))?;
        if n.op == "input" {
            return Err(model_err(&n.name, "graph inputs belong in the `inputs` list"));
        }
        let mut attrs = Attrs::new();
        for (k, v) in &n.attrs {
            let spec = sig
                .attr_spec(k)
                .ok_or_else(|| model_err(&n.name, format!("`{}` has no attribute `{k}`", n.op)))?;
            attrs.insert(k.clone(), attr_from_json(&n.name, k, spec.kind, v)?);
        }
        match (&n.constant, n.op == "constant") {
            (Some(p), true) => {
                let t = p.decode().map_err(|e| model_err(&n.name, e))?;
                attrs.insert("value".into(), AttrValue::Tensor(t));
            }
            (None, true) if !attrs.contains_key("value") => return Err(model_err(&n.name, "constant without payload")),
            (Some(_), false) => return Err(model_err(&n.name, "only constants carry a payload")),
            _ => {}
        }
        if let Some(r) = &n.reference {
            if n.op != "constant" {
                return Err(model_err(&n.name, "only constants carry reference values"));
            }
            let t = r.decode().map_err(|e| model_err(&n.name, e))?;
            attrs.insert("reference".into(), AttrValue::Tensor(t));
        }
        let inputs = n
            .inputs
            .iter()
            .map(|i| {
                names
                    .get(i.as_str())
                    .copied()
                    .ok_or_else(|| model_err(&n.name, format!("input `{i}` is not defined before this node")))
            })
            .collect::<Result<Vec<_>>>()?;
        let e = b.push(&n.op, inputs, attrs).map_err(|e| wrap(&n.name, e))?;
        names.insert(&n.name, e);
    }
    let outputs = file
        .outputs
        .iter()
        .map(|o| names.get(o.as_str()).copied().ok_or_else(|| model_err(o, "output is not defined")))
        .collect::<Result<Vec<_>>>()?;
    if outputs.is_empty() {
        return Err(model_err("", "model has no outputs"));
    }
    let g = b.finish(outputs, file.outputs.clone())?;
    infer_types(&g)
}

/// Serializes a graph as a model document. Output nodes are named after
/// their outputs; other nodes get `n<id>`.
pub fn write_model(g: &Graph) -> Result<String> {
    let mut names: HashMap<NodeId, String> = HashMap::new();
    let mut used: HashSet<String> = HashSet::new();
    let mut inputs = Vec::new();
    for node in g.inputs() {
        let name = node.string("name")?.to_string();
        used.insert(name.clone());
        names.insert(node.id, name.clone());
        inputs.push(InputEntry {
            name,
            shape: node.out_type().shape.clone(),
            dtype: node.out_type().dtype.name().to_string(),
            qparams: node.quant("qparams").ok().cloned(),
        });
    }
    for (e, name) in g.outputs.iter().zip(&g.output_names) {
        if names.contains_key(&e.node) {
            if names[&e.node] != *name {
                return Err(Error::InvalidGraph(format!("{e} is exported under two names")));
            }
            continue;
        }
        if !used.insert(name.clone()) {
            return Err(Error::InvalidGraph(format!("output name `{name}` is not unique")));
        }
        names.insert(e.node, name.clone());
    }
    let mut nodes = Vec::new();
    for node in g.nodes.iter().filter(|n| !n.is_input()) {
        let name = match names.get(&node.id) {
            Some(n) => n.clone(),
            None => {
                let mut n = format!("n{}", node.id);
                while used.contains(&n) {
                    n.push('_');
                }
                used.insert(n.clone());
                names.insert(node.id, n.clone());
                n
            }
        };
        let mut attrs = BTreeMap::new();
        let mut constant = None;
        let mut reference = None;
        for (k, v) in &node.attrs {
            match (node.op.as_str(), k.as_str(), v) {
                ("constant", "value", AttrValue::Tensor(t)) => constant = Some(Payload::encode(t)),
                ("constant", "reference", AttrValue::Tensor(t)) => reference = Some(Payload::encode(t)),
                _ => {
                    attrs.insert(k.clone(), attr_to_json(v));
                }
            }
        }
        nodes.push(NodeEntry {
            name,
            op: node.op.clone(),
            inputs: node.inputs.iter().map(|e| names[&e.node].clone()).collect(),
            attrs,
            constant,
            reference,
        });
    }
    let file = ModelFile {
        version: 1,
        inputs,
        nodes,
        outputs: g.output_names.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidGraph(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::dump;
    use serde_json::json;

    fn payload(t: &TensorValue) -> Value {
        serde_json::to_value(Payload::encode(t)).unwrap()
    }

    fn conv_model(weight_len: usize) -> Vec<u8> {
        let w: Vec<i64> = (0..weight_len as i64).map(|i| i % 7 - 3).collect();
        let w = TensorValue::from_i64(vec![w.len()], DType::I8, &w).unwrap();
        let bias = TensorValue::from_i64(vec![2], DType::I32, &[10, -10]).unwrap();
        let mut wp = payload(&w);
        wp["shape"] = json!([2, 1, 3, 3]);
        json!({
            "version": 1,
            "inputs": [{"name": "x", "shape": [1, 1, 4, 4], "dtype": "u8",
                        "qparams": {"scales": [0.5], "zero_points": [128]}}],
            "nodes": [
                {"name": "w", "op": "constant", "constant": wp},
                {"name": "b", "op": "constant", "constant": payload(&bias)},
                {"name": "y", "op": "tflite.quantized_conv2d", "inputs": ["x", "w", "b"],
                 "attrs": {"padding": [1, 1, 1, 1],
                           "input_qparams": {"scales": [0.5], "zero_points": [128]},
                           "weight_qparams": {"scales": [0.25], "zero_points": [0]},
                           "output_qparams": {"scales": [2.0], "zero_points": [3]},
                           "out_dtype": "u8", "out_min": -1000, "out_max": 1000}}
            ],
            "outputs": ["y"]
        })
        .to_string()
        .into_bytes()
    }

    #[test]
    fn composite_conv_expands_to_four_ops() {
        let g = parse_model(&conv_model(18)).unwrap();
        let ops: Vec<&str> = g.nodes.iter().filter(|n| !n.is_input() && !n.is_constant()).map(|n| n.op.as_str()).collect();
        assert_eq!(ops, ["qnn.conv2d", "bias_add", "clip", "qnn.requantize"]);
        assert_eq!(g.output_names, ["y"]);
    }

    #[test]
    fn payload_size_mismatch_names_the_node() {
        let err = parse_model(&conv_model(17)).unwrap_err();
        assert!(matches!(&err, Error::Model { node, .. } if node == "w"), "{err}");
    }

    #[test]
    fn float_add_model() {
        let doc = json!({
            "version": 1,
            "inputs": [{"name": "a", "shape": [3], "dtype": "f32"}, {"name": "b", "shape": [3], "dtype": "f32"}],
            "nodes": [{"name": "s", "op": "add", "inputs": ["a", "b"]}],
            "outputs": ["s"]
        });
        let g = parse_model(doc.to_string().as_bytes()).unwrap();
        assert_eq!(g.nodes.iter().filter(|n| !n.is_input()).count(), 1);
        assert_eq!(g.count_ops(|o| o.starts_with("qnn.")), 0);
    }

    #[test]
    fn malformed_document_has_position() {
        let err = parse_model(b"{\n  \"version\": 1,\n  \"nodes\": [,]\n}").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_op_and_forward_reference() {
        let doc = json!({"version": 1, "inputs": [], "nodes": [{"name": "z", "op": "softmax"}], "outputs": ["z"]});
        assert!(parse_model(doc.to_string().as_bytes()).unwrap_err().to_string().contains("softmax"));
        let doc = json!({"version": 1, "inputs": [{"name": "a", "shape": [1], "dtype": "i32"}],
            "nodes": [{"name": "p", "op": "add", "inputs": ["a", "q"]}, {"name": "q", "op": "relu", "inputs": ["a"]}],
            "outputs": ["p"]});
        assert!(matches!(parse_model(doc.to_string().as_bytes()), Err(Error::Model { .. })));
    }

    #[test]
    fn quant_params_length_mismatch() {
        let doc = String::from_utf8(conv_model(18)).unwrap().replace("\"zero_points\":[0]", "\"zero_points\":[0,0]");
        assert!(parse_model(doc.as_bytes()).is_err());
    }

    #[test]
    fn parse_is_deterministic_and_round_trips() {
        let a = parse_model_raw(&conv_model(18)).unwrap();
        let b = parse_model_raw(&conv_model(18)).unwrap();
        assert_eq!(dump(&a), dump(&b));
        let written = write_model(&a).unwrap();
        let c = parse_model_raw(written.as_bytes()).unwrap();
        assert_eq!(dump(&c), dump(&a));
    }

    #[test]
    fn scales_are_stored_at_f32_precision() {
        let g = parse_model_raw(&conv_model(18)).unwrap();
        let x = g.inputs().next().unwrap();
        let s = x.quant("qparams").unwrap().scale();
        assert_eq!(s, s as f32 as f64);
    }
}
