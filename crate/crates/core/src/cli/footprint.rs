use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::ir::{Graph, NodeId, TensorType};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintReport {
    /// Constants read as conv2d/matmul weights.
    pub weight_bytes: usize,
    /// Peak bytes of simultaneously live non-constant tensors.
    pub activation_bytes: usize,
    pub total_bytes: usize,
    /// Remaining constants (folded biases, zero-point terms); not in the total.
    pub other_constant_bytes: usize,
    pub weights_by_dtype: BTreeMap<String, usize>,
    pub activations_by_dtype: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fp32: Option<Fp32Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fp32Comparison {
    pub weight_bytes: usize,
    pub activation_bytes: usize,
    pub total_bytes: usize,
    pub weight_ratio: f64,
    pub activation_ratio: f64,
    pub total_ratio: f64,
}

fn weight_ids(g: &Graph) -> HashSet<NodeId> {
    let consts: HashSet<NodeId> = g.nodes.iter().filter(|n| n.is_constant()).map(|n| n.id).collect();
    g.nodes
        .iter()
        .filter(|n| matches!(n.op.as_str(), "conv2d" | "matmul" | "qnn.conv2d" | "qnn.dense"))
        .filter_map(|n| n.inputs.get(1).map(|e| e.node))
        .filter(|id| consts.contains(id))
        .collect()
}

/// Peak of live tensor bytes over the node order, and the tensors live at
/// that peak. A tensor is live from its producer through its last consumer
/// (graph outputs stay live to the end).
fn peak_liveness(g: &Graph, bytes: impl Fn(&TensorType) -> usize) -> (usize, Vec<NodeId>) {
    let positions = g.positions();
    let end = g.nodes.len();
    let mut last: HashMap<NodeId, usize> = HashMap::new();
    for (i, n) in g.nodes.iter().enumerate() {
        last.entry(n.id).or_insert(i);
        for e in &n.inputs {
            let l = last.entry(e.node).or_insert(i);
            *l = (*l).max(i);
        }
    }
    for e in &g.outputs {
        last.insert(e.node, end);
    }
    let mut best = (0, Vec::new());
    for i in 0..g.nodes.len() {
        let live: Vec<NodeId> = g
            .nodes
            .iter()
            .filter(|n| !n.is_constant())
            .filter(|n| positions[&n.id] <= i && last[&n.id] >= i)
            .map(|n| n.id)
            .collect();
        let total: usize = live.iter().map(|id| bytes(&g.nodes[positions[id]].out_types[0])).sum();
        if total > best.0 {
            best = (total, live);
        }
    }
    best
}

pub fn footprint(g: &Graph, compare_fp32: bool) -> FootprintReport {
    let weights = weight_ids(g);
    let mut weights_by_dtype = BTreeMap::new();
    let (mut weight_bytes, mut weight_elems, mut other_constant_bytes) = (0, 0, 0);
    for n in g.nodes.iter().filter(|n| n.is_constant()) {
        let ty = n.out_type();
        if weights.contains(&n.id) {
            weight_bytes += ty.size_bytes();
            weight_elems += ty.numel();
            *weights_by_dtype.entry(ty.dtype.name().to_string()).or_insert(0) += ty.size_bytes();
        } else {
            other_constant_bytes += ty.size_bytes();
        }
    }
    let (activation_bytes, live) = peak_liveness(g, TensorType::size_bytes);
    let mut activations_by_dtype = BTreeMap::new();
    for id in live {
        let ty = g.node(id).expect("live node").out_type();
        *activations_by_dtype.entry(ty.dtype.name().to_string()).or_insert(0) += ty.size_bytes();
    }
    let total_bytes = weight_bytes + activation_bytes;
    let fp32 = compare_fp32.then(|| {
        let wf = weight_elems * 4;
        let (af, _) = peak_liveness(g, |t| t.numel() * 4);
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Fp32Comparison {
            weight_bytes: wf,
            activation_bytes: af,
            total_bytes: wf + af,
            weight_ratio: ratio(weight_bytes, wf),
            activation_ratio: ratio(activation_bytes, af),
            total_ratio: ratio(total_bytes, wf + af),
        }
    });
    FootprintReport {
        weight_bytes,
        activation_bytes,
        total_bytes,
        other_constant_bytes,
        weights_by_dtype,
        activations_by_dtype,
        fp32,
    }
}

impl FootprintReport {
    pub fn to_text(&self) -> String {
        let by = |m: &BTreeMap<String, usize>| m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "weights:     {} bytes ({})\nactivations: {} bytes peak ({})\ntotal:       {} bytes\nother constants: {} bytes\n",
            self.weight_bytes,
            by(&self.weights_by_dtype),
            self.activation_bytes,
            by(&self.activations_by_dtype),
            self.total_bytes,
            self.other_constant_bytes
        );
        if let Some(f) = &self.fp32 {
            s += &format!(
                "fp32 weights:     {} bytes (ratio {:.4})\nfp32 activations: {} bytes (ratio {:.4})\nfp32 total:       {} bytes (ratio {:.4})\n",
                f.weight_bytes, f.weight_ratio, f.activation_bytes, f.activation_ratio, f.total_bytes, f.total_ratio
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Attrs, DType, GraphBuilder, TensorValue};

    #[test]
    fn weight_bytes_are_a_quarter_of_fp32() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![1, 10, 3, 3], DType::I8).unwrap();
        let w = b.constant(TensorValue::zeros(vec![100, 10, 1, 1], DType::I8)).unwrap();
        let y = b.push("conv2d", vec![x, w], Attrs::new()).unwrap();
        let g = b.finish(vec![y], vec![]).unwrap();
        let r = footprint(&g, true);
        assert_eq!(r.weight_bytes, 1000);
        let f = r.fp32.unwrap();
        assert_eq!(f.weight_bytes, 4000);
        assert_eq!(f.weight_ratio, 0.25);
        // i8 input (90) and i32 output (3600) are both live at the conv
        assert_eq!(r.activation_bytes, 90 + 3600);
        assert_eq!(f.activation_bytes, 360 + 3600);
        assert!(f.total_ratio > f.weight_ratio && f.total_ratio < 1.0);
    }

    #[test]
    fn peak_releases_dead_tensors() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![100], DType::I32).unwrap();
        let a = b.push("relu", vec![x], Attrs::new()).unwrap();
        let c = b.push("relu", vec![a], Attrs::new()).unwrap();
        let d = b.push("relu", vec![c], Attrs::new()).unwrap();
        let g = b.finish(vec![d], vec![]).unwrap();
        assert_eq!(footprint(&g, false).activation_bytes, 800);
    }
}
