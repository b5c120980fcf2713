use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::ir::registry;
use crate::ir::{Graph, NodeId, TensorType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node: Option<NodeId>,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(id) => write!(f, "[{}] node %{id}: {}", self.rule, self.message),
            None => write!(f, "[{}] {}", self.rule, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.diagnostics.iter().map(|d| d.to_string()).collect();
            Err(Error::InvalidGraph(msgs.join("; ")))
        }
    }

    fn push(&mut self, node: Option<NodeId>, rule: &'static str, message: String) {
        self.diagnostics.push(Diagnostic {
            node,
            rule,
            message,
        });
    }
}

/// Structural checks: outputs exist, ids are unique, every edge points
/// backwards in node order, and every node matches its registered signature.
pub fn validate_graph(g: &Graph) -> ValidationReport {
    let mut report = ValidationReport::default();
    if g.outputs.is_empty() {
        report.push(None, "outputs", "no outputs".into());
    }
    let mut outputs_of: HashMap<NodeId, usize> = HashMap::new();
    let all_ids: HashSet<NodeId> = g.nodes.iter().map(|n| n.id).collect();
    for n in &g.nodes {
        for e in &n.inputs {
            match outputs_of.get(&e.node) {
                Some(&count) if e.output < count => {}
                Some(_) => report.push(
                    Some(n.id),
                    "edge",
                    format!("input {e} refers to a missing output index"),
                ),
                None if all_ids.contains(&e.node) => report.push(
                    Some(n.id),
                    "acyclic",
                    format!("cycle/forward reference at node {}", n.id),
                ),
                None => report.push(Some(n.id), "edge", format!("input {e} does not resolve")),
            }
        }
        if outputs_of.insert(n.id, 1).is_some() {
            report.push(Some(n.id), "unique-id", format!("duplicate node id {}", n.id));
        }
        match registry::lookup(&n.op) {
            None => report.push(Some(n.id), "registry", format!("unknown op `{}`", n.op)),
            Some(sig) => {
                if let Err(e) = sig.check(n) {
                    report.push(Some(n.id), "signature", e.to_string());
                }
            }
        }
        if n.id >= g.next_id {
            report.push(
                Some(n.id),
                "id-allocation",
                format!("id {} is not below next_id {}", n.id, g.next_id),
            );
        }
    }
    for e in &g.outputs {
        if !matches!(outputs_of.get(&e.node), Some(&c) if e.output < c) {
            report.push(None, "outputs", format!("graph output {e} does not resolve"));
        }
    }
    if g.output_names.len() != g.outputs.len() {
        report.push(None, "outputs", "output names and outputs differ in length".into());
    }
    report
}

/// Re-derives every node's output types in topological order.
pub fn infer_types(g: &Graph) -> Result<Graph> {
    validate_graph(g).into_result()?;
    let mut out = g.clone();
    let mut types: HashMap<NodeId, Vec<TensorType>> = HashMap::new();
    for node in &mut out.nodes {
        let inputs: Vec<TensorType> = node
            .inputs
            .iter()
            .map(|e| types[&e.node][e.output].clone())
            .collect();
        node.out_types = registry::infer_node(node, &inputs)?;
        types.insert(node.id, node.out_types.clone());
    }
    Ok(out)
}
