//! Decision-tree construction with pre-cutting instead of region compaction.
//!
//! Every node region stays bit-aligned: pre-cutting halves a region only at
//! its most significant free bit, and cuts split it into power-of-two slices.
//! Selecting a child therefore only needs bit extraction from the header.
//!
//! Build order at each node: pre-cut to a fixpoint, stop at `binth` rules,
//! otherwise cut and recurse into every child the rule hypercubes touch.
//! A cut is kept only if its largest child holds at most `binth` rules or at
//! most half of the node's; when no cut qualifies the node becomes an
//! oversized leaf.
//! With push enabled, rules touching every child stay at the node instead.
//! Overlap pruning and leaf merging run over the finished tree.

mod cuts;
mod heuristics;
mod precut;
mod region;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ruleset::{Rule, Ruleset};

pub use cuts::{select_cuts, CutSpec, DimCut, NoCuttableDimension};
pub use heuristics::{apply_node_merging, prune_overlapped, prune_tree, push_common};
pub use precut::{precut, Precut};
pub use region::{Interval, Region, DIMS, DIM_BITS, DIM_NAMES};
pub use stats::{tree_stats, TreeStats};

/// Upper bound on `index_bit_cap`; a node header stores each dimension's cut
/// count in four bits.
pub const MAX_INDEX_BITS: u8 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Leaf capacity before a node is cut.
    pub binth: usize,
    /// Space factor bounding replication and fan-out per cut.
    pub spfac: f64,
    /// Maximum cut bits per node, summed over dimensions.
    pub index_bit_cap: u8,
    pub merge: bool,
    pub overlap: bool,
    pub push: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            binth: 8,
            spfac: 4.0,
            index_bit_cap: 8,
            merge: true,
            overlap: true,
            push: true,
        }
    }
}

impl BuildConfig {
    /// Copy of this config with the three heuristics set as given.
    pub fn with_heuristics(mut self, merge: bool, overlap: bool, push: bool) -> Self {
        self.merge = merge;
        self.overlap = overlap;
        self.push = push;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.binth == 0 {
            return Err(ConfigError::Binth);
        }
        if self.spfac.is_nan() || self.spfac < 1.0 {
            return Err(ConfigError::Spfac(self.spfac));
        }
        if self.index_bit_cap == 0 || self.index_bit_cap > MAX_INDEX_BITS {
            return Err(ConfigError::IndexBits(self.index_bit_cap));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("binth must be at least 1")]
    Binth,
    #[error("spfac must be at least 1, got {0}")]
    Spfac(f64),
    #[error("index bit cap must be within 1..={MAX_INDEX_BITS}, got {0}")]
    IndexBits(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Empty,
    /// Rule ids in priority order. `oversized` marks leaves above `binth` that
    /// no cut could split.
    Leaf {
        rules: Vec<u16>,
        oversized: bool,
    },
    Internal {
        cuts: CutSpec,
        children: Vec<NodeId>,
        /// Rules touching every child, checked on the way down.
        pushed: Vec<u16>,
    },
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Empty => NodeKind::Empty,
            Node::Leaf { .. } => NodeKind::Leaf,
            Node::Internal { .. } => NodeKind::Internal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Empty,
    Leaf,
    Internal,
}

/// A built classifier tree. After merging, leaves may be shared, so the
/// structure is a DAG rooted at `root()`.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    regions: Vec<Region>,
    root: NodeId,
    ruleset: Ruleset,
    cubes: Vec<Region>,
    config: BuildConfig,
}

impl DecisionTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Region a node was built for; compacted for leaves and internal nodes.
    pub fn region(&self, id: NodeId) -> &Region {
        &self.regions[id.index()]
    }

    pub fn ruleset(&self) -> &Ruleset {
        &self.ruleset
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn rule(&self, id: u16) -> &Rule {
        &self.ruleset.rules()[usize::from(id)]
    }

    pub(crate) fn cube(&self, id: u16) -> &Region {
        &self.cubes[usize::from(id)]
    }

    /// Nodes reachable from the root, each listed once, in depth-first order.
    pub fn reachable(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id.index()], true) {
                continue;
            }
            out.push(id);
            if let Node::Internal { children, .. } = self.node(id) {
                stack.extend(children.iter().rev());
            }
        }
        out
    }

    fn push_node(&mut self, node: Node, region: Region) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        self.regions.push(region);
        id
    }
}

/// Builds the tree for `rs`, then applies the heuristics enabled in `cfg`.
pub fn build(rs: &Ruleset, cfg: &BuildConfig) -> Result<DecisionTree, ConfigError> {
    cfg.validate()?;
    let mut tree = DecisionTree {
        nodes: Vec::new(),
        regions: Vec::new(),
        root: NodeId(0),
        ruleset: rs.clone(),
        cubes: rs.rules().iter().map(Region::of_rule).collect(),
        config: *cfg,
    };
    let all: Vec<u16> = rs.rules().iter().map(|r| r.id).collect();
    tree.root = build_node(&mut tree, all, Region::universe());
    if cfg.overlap {
        prune_tree(&mut tree);
    }
    if cfg.merge {
        apply_node_merging(&mut tree);
    }
    Ok(tree)
}

fn build_node(tree: &mut DecisionTree, ids: Vec<u16>, region: Region) -> NodeId {
    if ids.is_empty() {
        return tree.push_node(Node::Empty, region);
    }
    let cubes: Vec<Region> = ids.iter().map(|&i| *tree.cube(i)).collect();
    let region = precut::precut_cubes(&region, &cubes).region;
    let cfg = tree.config;
    if ids.len() <= cfg.binth {
        return tree.push_node(
            Node::Leaf {
                rules: ids,
                oversized: false,
            },
            region,
        );
    }
    let Some(Split { cuts, pushed, parts }) = choose_split(&ids, &cubes, &region, &cfg) else {
        return tree.push_node(
            Node::Leaf {
                rules: ids,
                oversized: true,
            },
            region,
        );
    };
    if parts.iter().all(Vec::is_empty) {
        let oversized = pushed.len() > cfg.binth;
        return tree.push_node(
            Node::Leaf {
                rules: pushed,
                oversized,
            },
            region,
        );
    }

    let me = tree.push_node(Node::Empty, region);
    let children = parts
        .into_iter()
        .enumerate()
        .map(|(i, part)| build_node(tree, part, cuts.child_region(&region, i)))
        .collect();
    tree.nodes[me.index()] = Node::Internal { cuts, children, pushed };
    if cfg.push {
        push_common(tree, me);
    }
    me
}

struct Split {
    cuts: CutSpec,
    pushed: Vec<u16>,
    parts: Vec<Vec<u16>>,
}

impl Split {
    fn new(ids: &[u16], cubes: &[Region], region: &Region, cuts: CutSpec, push: bool) -> Self {
        // With push enabled, rules touching every child stay at the node
        // instead of being copied into each child.
        let mut pushed = Vec::new();
        let mut parts: Vec<Vec<u16>> = vec![Vec::new(); cuts.child_count()];
        for (&id, cube) in ids.iter().zip(cubes) {
            if push && cuts.touches_all(region, cube) {
                pushed.push(id);
                continue;
            }
            for child in cuts.touched_children(region, cube) {
                parts[child].push(id);
            }
        }
        Split { cuts, pushed, parts }
    }

    fn largest(&self) -> usize {
        self.parts.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Picks the cut for an over-full node, or `None` when no cut shrinks it
/// enough. A cut is accepted when its largest child fits in a leaf or holds
/// at most half the node's rules; weaker cuts compound replication with
/// depth. The mean-distinct choice of [`select_cuts`] is tried first, then
/// each separable dimension alone.
fn choose_split(ids: &[u16], cubes: &[Region], region: &Region, cfg: &BuildConfig) -> Option<Split> {
    let n = ids.len();
    let good = |s: &Split| s.largest() <= cfg.binth || 2 * s.largest() <= n;

    let first = Split::new(
        ids,
        cubes,
        region,
        cuts::select_cuts_cubes(cubes, region, cfg).ok()?,
        cfg.push,
    );
    if good(&first) {
        return Some(first);
    }
    let distinct = cuts::distinct_projections(cubes, region);
    (0..DIMS)
        .filter(|&d| distinct[d] >= 2)
        .map(|d| Split::new(ids, cubes, region, cuts::grow_cuts(cubes, region, cfg, &[d]), cfg.push))
        .filter(good)
        .min_by_key(|s| (s.largest(), s.cuts.child_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ruleset::{Prefix, ProtoSpec};

    fn src_rule(addr: u32, len: u8) -> Rule {
        Rule {
            src: Prefix::new(addr, len).unwrap(),
            ..Rule::wildcard(0)
        }
    }

    fn cfg(binth: usize) -> BuildConfig {
        BuildConfig {
            binth,
            ..BuildConfig::default()
        }
    }

    #[test]
    fn empty_ruleset_gives_empty_root() {
        let t = build(&Ruleset::empty(), &BuildConfig::default()).unwrap();
        assert_eq!(t.node(t.root()), &Node::Empty);
    }

    #[test]
    fn small_ruleset_is_single_leaf() {
        let rs = Ruleset::from_rules(vec![src_rule(0x0a00_0000, 8), Rule::wildcard(0)]).unwrap();
        let t = build(&rs, &BuildConfig::default().with_heuristics(false, false, false)).unwrap();
        assert_eq!(
            t.node(t.root()),
            &Node::Leaf {
                rules: vec![0, 1],
                oversized: false
            }
        );
    }

    #[test]
    fn four_distinct_sources() {
        let rs = Ruleset::from_rules((0..4u32).map(|i| src_rule(i << 30, 2)).collect()).unwrap();
        let t = build(&rs, &cfg(1)).unwrap();
        let Node::Internal { cuts, children, pushed } = t.node(t.root()) else {
            panic!("root should be internal");
        };
        assert!(cuts.dims[0].ncuts >= 2);
        assert!(pushed.is_empty());
        let mut leaves: Vec<Vec<u16>> = children
            .iter()
            .filter_map(|&c| match t.node(c) {
                Node::Leaf { rules, .. } => Some(rules.clone()),
                _ => None,
            })
            .collect();
        leaves.sort();
        leaves.dedup();
        assert_eq!(leaves, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn duplicate_rules_end_in_oversized_leaf() {
        let r = Rule {
            src: Prefix::new(0x0a00_0000, 8).unwrap(),
            proto: ProtoSpec::exact(6),
            ..Rule::wildcard(0)
        };
        let rs = Ruleset::from_rules(vec![r; 5]).unwrap();
        let t = build(&rs, &cfg(2).with_heuristics(false, false, false)).unwrap();
        assert!(matches!(
            t.node(t.root()),
            Node::Leaf { oversized: true, rules } if rules.len() == 5
        ));
    }

    #[test]
    fn config_validation() {
        assert_eq!(build(&Ruleset::empty(), &cfg(0)).unwrap_err(), ConfigError::Binth);
        let bad = BuildConfig {
            spfac: 0.5,
            ..BuildConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = BuildConfig {
            index_bit_cap: 16,
            ..BuildConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::IndexBits(16)));
    }

    #[test]
    fn regions_stay_aligned() {
        let rs = crate::ruleset::gen_synthetic(5, 400, crate::ruleset::Profile::Ipc);
        let t = build(&rs, &BuildConfig::default()).unwrap();
        for id in t.reachable() {
            assert!(t.region(id).is_aligned());
        }
    }
}
