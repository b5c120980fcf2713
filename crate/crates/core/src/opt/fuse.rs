use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::ir::{FusedRegion, Graph, NodeId};

pub const FUSIBLE_FOLLOWERS: &[&str] = &[
    "add",
    "subtract",
    "multiply",
    "clip",
    "cast",
    "bias_add",
    "relu",
    "fixed_point_multiply",
];

fn is_anchor(op: &str) -> bool {
    matches!(op, "conv2d" | "matmul")
}

/// Groups each conv2d/matmul with the longest chain of elementwise
/// followers in which every node but the last has a single use. Only
/// annotations change: nodes, ids and edges are untouched.
pub fn fuse_ops(g: &Graph) -> Graph {
    let uses = g.use_counts();
    let consumers = g.consumers();
    let positions = g.positions();
    let mut taken: HashSet<NodeId> = g.regions.iter().flat_map(|r| r.members().collect::<Vec<_>>()).collect();
    let mut regions = g.regions.clone();
    for node in &g.nodes {
        if !is_anchor(&node.op) || taken.contains(&node.id) {
            continue;
        }
        let mut followers = Vec::new();
        let mut cur = node.id;
        loop {
            if uses.get(&cur).copied().unwrap_or(0) != 1 {
                break;
            }
            let Some(&[next]) = consumers.get(&cur).map(Vec::as_slice) else {
                break;
            };
            let next_node = &g.nodes[positions[&next]];
            if !FUSIBLE_FOLLOWERS.contains(&next_node.op.as_str()) || taken.contains(&next) {
                break;
            }
            // the running value must feed the follower exactly once
            if next_node.inputs.iter().filter(|e| e.node == cur).count() != 1 {
                break;
            }
            followers.push(next);
            cur = next;
        }
        if followers.is_empty() {
            continue;
        }
        taken.insert(node.id);
        taken.extend(followers.iter().copied());
        regions.push(FusedRegion {
            anchor: node.id,
            followers,
        });
    }
    let mut out = g.clone();
    out.regions = regions;
    out
}

/// Checks the structural rules of a region: an anchor op, fusible
/// followers, single in-region use for all but the tail, and convexity
/// (no path leaves the region and re-enters it).
pub fn check_region(g: &Graph, region: &FusedRegion) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidGraph(format!("region at %{}: {msg}", region.anchor)));
    let positions = g.positions();
    let uses = g.use_counts();
    let consumers = g.consumers();
    let members: Vec<NodeId> = region.members().collect();
    let member_set: HashSet<NodeId> = members.iter().copied().collect();
    for &m in &members {
        if !positions.contains_key(&m) {
            return bad(format!("member %{m} is not in the graph"));
        }
    }
    if !is_anchor(&g.nodes[positions[&region.anchor]].op) {
        return bad("anchor is not conv2d or matmul".into());
    }
    for w in members.windows(2) {
        let (prev, next) = (w[0], w[1]);
        let op = &g.nodes[positions[&next]].op;
        if !FUSIBLE_FOLLOWERS.contains(&op.as_str()) {
            return bad(format!("%{next} ({op}) is not a fusible follower"));
        }
        if uses.get(&prev).copied().unwrap_or(0) != 1 || consumers.get(&prev).map(Vec::as_slice) != Some(&[next][..]) {
            return bad(format!("%{prev} must have exactly one use, by %{next}"));
        }
        if positions[&prev] >= positions[&next] {
            return bad("members are out of order".into());
        }
    }
    // walk forward from every edge leaving the region
    let empty = Vec::new();
    let mut seen: HashSet<NodeId> = HashSet::new();
    let mut stack: Vec<NodeId> = members
        .iter()
        .flat_map(|m| consumers.get(m).unwrap_or(&empty).iter().copied())
        .filter(|c| !member_set.contains(c))
        .collect();
    while let Some(v) = stack.pop() {
        if !seen.insert(v) {
            continue;
        }
        for &c in consumers.get(&v).unwrap_or(&empty) {
            if member_set.contains(&c) {
                return bad(format!("path through %{v} re-enters the region at %{c}"));
            }
            stack.push(c);
        }
    }
    Ok(())
}
