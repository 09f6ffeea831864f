use std::collections::{BTreeSet, HashMap};

use crate::ruleset::Rule;

use super::{DecisionTree, Node, NodeId, Region};

/// Moves rules touching every child of internal node `id` into its pushed
/// list and strips them from the whole subtree below. Returns the ids pushed.
///
/// Must run before [`apply_node_merging`], while subtrees are unshared. A node
/// left with only empty children becomes a leaf holding the pushed rules.
pub fn push_common(tree: &mut DecisionTree, id: NodeId) -> Vec<u16> {
    let Node::Internal { cuts, children, .. } = tree.node(id) else {
        return Vec::new();
    };
    let (cuts, children) = (*cuts, children.clone());
    let region = *tree.region(id);

    let mut below = BTreeSet::new();
    for &c in &children {
        collect_rules(tree, c, &mut below);
    }
    let common: BTreeSet<u16> = below
        .into_iter()
        .filter(|&r| cuts.touches_all(&region, tree.cube(r)))
        .collect();
    if common.is_empty() {
        return Vec::new();
    }
    for &c in &children {
        remove_rules(tree, c, &common);
    }

    let binth = tree.config.binth;
    let all_empty = children.iter().all(|c| matches!(tree.node(*c), Node::Empty));
    if let Node::Internal { pushed, .. } = &mut tree.nodes[id.index()] {
        pushed.extend(common.iter().copied());
        pushed.sort_unstable();
        pushed.dedup();
        if all_empty {
            let rules = std::mem::take(pushed);
            let oversized = rules.len() > binth;
            tree.nodes[id.index()] = Node::Leaf { rules, oversized };
        }
    }
    common.into_iter().collect()
}

fn collect_rules(tree: &DecisionTree, id: NodeId, out: &mut BTreeSet<u16>) {
    match tree.node(id) {
        Node::Empty => {}
        Node::Leaf { rules, .. } => out.extend(rules.iter().copied()),
        Node::Internal { children, pushed, .. } => {
            out.extend(pushed.iter().copied());
            for &c in children {
                collect_rules(tree, c, out);
            }
        }
    }
}

fn remove_rules(tree: &mut DecisionTree, id: NodeId, gone: &BTreeSet<u16>) {
    let idx = id.index();
    let children = match &mut tree.nodes[idx] {
        Node::Empty => return,
        Node::Leaf { rules, oversized } => {
            rules.retain(|r| !gone.contains(r));
            *oversized = rules.len() > tree.config.binth;
            if rules.is_empty() {
                tree.nodes[idx] = Node::Empty;
            }
            return;
        }
        Node::Internal { children, pushed, .. } => {
            pushed.retain(|r| !gone.contains(r));
            children.clone()
        }
    };
    for &c in &children {
        remove_rules(tree, c, gone);
    }
    if children.iter().all(|c| matches!(tree.nodes[c.index()], Node::Empty)) {
        let binth = tree.config.binth;
        if let Node::Internal { pushed, .. } = &mut tree.nodes[idx] {
            let rules = std::mem::take(pushed);
            tree.nodes[idx] = if rules.is_empty() {
                Node::Empty
            } else {
                let oversized = rules.len() > binth;
                Node::Leaf { rules, oversized }
            };
        }
    }
}

/// Drops each rule whose part inside `region` is covered by the part of a
/// single earlier rule inside `region`. `rules` must be in priority order.
pub fn prune_overlapped(rules: &[Rule], region: &Region) -> Vec<Rule> {
    let cubes: Vec<Region> = rules.iter().map(Region::of_rule).collect();
    let keep = prune_mask(&cubes, region);
    rules.iter().zip(keep).filter_map(|(r, k)| k.then_some(*r)).collect()
}

fn prune_mask(cubes: &[Region], region: &Region) -> Vec<bool> {
    let clipped: Vec<Option<Region>> = cubes.iter().map(|c| c.intersect(region)).collect();
    (0..clipped.len())
        .map(|i| {
            !clipped[..i].iter().any(|s| match (s, &clipped[i]) {
                (_, None) => true,
                (Some(s), Some(r)) => s.covers(r),
                (None, Some(_)) => false,
            })
        })
        .collect()
}

/// Applies [`prune_overlapped`] to every leaf, within the leaf's region.
/// Returns the number of rule entries removed.
pub fn prune_tree(tree: &mut DecisionTree) -> usize {
    let mut removed = 0;
    for id in tree.reachable() {
        let Node::Leaf { rules, .. } = tree.node(id) else {
            continue;
        };
        let cubes: Vec<Region> = rules.iter().map(|&r| *tree.cube(r)).collect();
        let keep = prune_mask(&cubes, tree.region(id));
        if keep.iter().all(|&k| k) {
            continue;
        }
        if let Node::Leaf { rules, .. } = &mut tree.nodes[id.index()] {
            let before = rules.len();
            let mut it = keep.iter();
            rules.retain(|_| *it.next().expect("mask matches rules"));
            removed += before - rules.len();
        }
    }
    removed
}

/// Points every reference to a leaf at the first leaf holding the same rule
/// list, then drops nodes no longer reachable. Node ids are renumbered.
pub fn apply_node_merging(tree: &mut DecisionTree) {
    let order = tree.reachable();
    let mut canon: HashMap<Vec<u16>, NodeId> = HashMap::new();
    for &id in &order {
        if let Node::Leaf { rules, .. } = tree.node(id) {
            canon.entry(rules.clone()).or_insert(id);
        }
    }
    for &id in &order {
        let Node::Internal { children, .. } = tree.node(id) else {
            continue;
        };
        let remapped: Vec<NodeId> = children
            .iter()
            .map(|&c| match tree.node(c) {
                Node::Leaf { rules, .. } => canon[rules],
                _ => c,
            })
            .collect();
        if let Node::Internal { children, .. } = &mut tree.nodes[id.index()] {
            *children = remapped;
        }
    }
    compact(tree);
}

/// Rebuilds the node store with only reachable nodes, in depth-first order.
fn compact(tree: &mut DecisionTree) {
    let order = tree.reachable();
    let mut remap = vec![u32::MAX; tree.nodes.len()];
    for (new, old) in order.iter().enumerate() {
        remap[old.index()] = new as u32;
    }
    let mut nodes = Vec::with_capacity(order.len());
    let mut regions = Vec::with_capacity(order.len());
    for old in &order {
        let mut node = std::mem::replace(&mut tree.nodes[old.index()], Node::Empty);
        if let Node::Internal { children, .. } = &mut node {
            for c in children.iter_mut() {
                *c = NodeId(remap[c.index()]);
            }
        }
        nodes.push(node);
        regions.push(tree.regions[old.index()]);
    }
    tree.nodes = nodes;
    tree.regions = regions;
    tree.root = NodeId(remap[tree.root.index()]);
}
