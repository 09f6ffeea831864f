use serde::{Deserialize, Serialize};

use super::{DecisionTree, Node, NodeId};

/// Child entries per memory word.
const ENTRIES_PER_WORD: usize = 10;
/// Rules per memory word.
const RULES_PER_WORD: usize = 2;
const WORD_BYTES: u64 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    /// Distinct stored nodes, shared leaves counted once.
    pub nodes: usize,
    pub empty_nodes: usize,
    pub leaf_nodes: usize,
    pub internal_nodes: usize,
    pub oversized_leaves: usize,
    /// Deepest root-to-terminal path, in edges.
    pub max_depth: usize,
    /// Mean depth over every root-to-terminal path.
    pub mean_depth: f64,
    /// Rule entries held in distinct leaves and pushed lists.
    pub stored_rules: usize,
    pub pushed_rules: usize,
    /// `stored_rules / ruleset size`, or 0 for an empty ruleset.
    pub replication: f64,
    pub memory_words: u64,
    pub memory_bytes: u64,
}

pub fn tree_stats(tree: &DecisionTree) -> TreeStats {
    let mut s = TreeStats {
        nodes: 0,
        empty_nodes: 0,
        leaf_nodes: 0,
        internal_nodes: 0,
        oversized_leaves: 0,
        max_depth: 0,
        mean_depth: 0.0,
        stored_rules: 0,
        pushed_rules: 0,
        replication: 0.0,
        memory_words: 0,
        memory_bytes: 0,
    };
    for id in tree.reachable() {
        s.nodes += 1;
        match tree.node(id) {
            Node::Empty => s.empty_nodes += 1,
            Node::Leaf { rules, oversized } => {
                s.leaf_nodes += 1;
                s.oversized_leaves += usize::from(*oversized);
                s.stored_rules += rules.len();
                s.memory_words += rules.len().div_ceil(RULES_PER_WORD) as u64;
            }
            Node::Internal { children, pushed, .. } => {
                s.internal_nodes += 1;
                s.stored_rules += pushed.len();
                s.pushed_rules += pushed.len();
                // the root header lives in registers
                let header = u64::from(id != tree.root());
                s.memory_words += header
                    + children.len().div_ceil(ENTRIES_PER_WORD) as u64
                    + pushed.len().div_ceil(RULES_PER_WORD) as u64;
            }
        }
    }
    s.memory_bytes = s.memory_words * WORD_BYTES;
    if !tree.ruleset().is_empty() {
        s.replication = s.stored_rules as f64 / tree.ruleset().len() as f64;
    }

    // Paths through shared leaves are counted once per reference.
    let (mut paths, mut depth_sum) = (0u64, 0u64);
    let mut stack: Vec<(NodeId, usize)> = vec![(tree.root(), 0)];
    while let Some((id, depth)) = stack.pop() {
        match tree.node(id) {
            Node::Internal { children, .. } => {
                stack.extend(children.iter().map(|&c| (c, depth + 1)));
            }
            _ => {
                paths += 1;
                depth_sum += depth as u64;
                s.max_depth = s.max_depth.max(depth);
            }
        }
    }
    s.mean_depth = depth_sum as f64 / paths as f64;
    s
}
