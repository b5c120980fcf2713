use std::collections::HashSet;

use crate::ir::{FusedRegion, Graph, NodeId};

/// Keeps the nodes reachable backwards from the outputs, plus every graph
/// input (inputs define the calling convention even when unused).
pub fn dead_code_elimination(g: &Graph) -> Graph {
    let positions = g.positions();
    let mut live: HashSet<NodeId> = HashSet::new();
    let mut stack: Vec<NodeId> = g.outputs.iter().map(|e| e.node).collect();
    while let Some(id) = stack.pop() {
        if !live.insert(id) {
            continue;
        }
        if let Some(&p) = positions.get(&id) {
            stack.extend(g.nodes[p].inputs.iter().map(|e| e.node));
        }
    }
    let nodes = g
        .nodes
        .iter()
        .filter(|n| n.is_input() || live.contains(&n.id))
        .cloned()
        .collect();
    let regions: Vec<FusedRegion> = g
        .regions
        .iter()
        .filter(|r| r.members().all(|m| live.contains(&m)))
        .cloned()
        .collect();
    Graph {
        nodes,
        outputs: g.outputs.clone(),
        output_names: g.output_names.clone(),
        regions,
        next_id: g.next_id,
    }
}
