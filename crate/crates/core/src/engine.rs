//! Functional classification over a memory image, with access counting.
//!
//! The lookup path uses only shifts, masks, adds and compares. Child
//! selection is bit extraction from the header; locating an entry inside its
//! word uses a constant multiply-shift instead of a divider.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memlayout::{
    word_entry, word_rule, ChildEntry, EncodingError, MemoryImage, NodeHeaderWord, RootBlock, ENTRIES_PER_WORD,
    RULES_PER_WORD,
};
use crate::ruleset::PacketHeader;
use crate::treebuild::{CutSpec, DecisionTree, Node};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: Option<u16>,
    /// `tree_accesses + leaf_accesses`.
    pub memory_accesses: u32,
    /// Header, child-entry and pushed-list words read during descent.
    pub tree_accesses: u32,
    /// Leaf rule words read.
    pub leaf_accesses: u32,
    /// Nodes entered, the root included.
    pub nodes_visited: u32,
    /// Two per rule word scanned.
    pub rules_compared: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("address {0} is outside the image")]
    Dangling(u32),
    #[error("rule list at word {0} runs past the end of the image")]
    Unterminated(u32),
    #[error("word {addr}: {source}")]
    Encoding { addr: u32, source: EncodingError },
}

/// Child index of `h` under `cuts`: for each dimension, the `ncuts` header
/// bits ending at `bitpos`, concatenated with sip most significant.
pub fn extract_child_index(h: &PacketHeader, cuts: &CutSpec) -> usize {
    let fields = h.fields();
    let mut index = 0usize;
    for (c, field) in cuts.dims.iter().zip(fields) {
        if c.ncuts == 0 {
            continue;
        }
        let shift = c.bitpos + 1 - c.ncuts;
        let slice = (field >> shift) & ((1 << c.ncuts) - 1);
        index = (index << c.ncuts) | slice as usize;
    }
    index
}

/// Word offset and slot of child entry `i`, for `i < 2^15`.
fn entry_position(i: usize) -> (u32, usize) {
    // floor(i / 10) for every 15-bit i
    let word = (i * 52429) >> 19;
    (word as u32, i - word * ENTRIES_PER_WORD)
}

pub fn classify(img: &MemoryImage, h: &PacketHeader) -> Result<MatchResult, EngineError> {
    let mut r = MatchResult {
        nodes_visited: 1,
        ..MatchResult::default()
    };
    let mut best: Option<u16> = None;
    let mut node = match *img.root() {
        RootBlock::Empty => return Ok(r),
        RootBlock::Leaf(a) => {
            best = scan(img, a, h, &mut r.leaf_accesses, &mut r.rules_compared)?;
            return Ok(finish(r, best));
        }
        RootBlock::Internal(hdr) => hdr,
    };
    loop {
        if let Some(p) = node.pushed_base {
            best = min_id(best, scan(img, p, h, &mut r.tree_accesses, &mut r.rules_compared)?);
        }
        let (off, slot) = entry_position(extract_child_index(h, &node.cuts));
        let addr = node.child_base + off;
        r.tree_accesses += 1;
        let entry = word_entry(fetch(img, addr)?, slot).map_err(|source| EngineError::Encoding { addr, source })?;
        r.nodes_visited += 1;
        match entry {
            ChildEntry::Empty => break,
            ChildEntry::Leaf(a) => {
                best = min_id(best, scan(img, a, h, &mut r.leaf_accesses, &mut r.rules_compared)?);
                break;
            }
            ChildEntry::Internal(a) => {
                r.tree_accesses += 1;
                node = NodeHeaderWord::from_word(fetch(img, a)?)
                    .map_err(|source| EngineError::Encoding { addr: a, source })?;
            }
        }
    }
    Ok(finish(r, best))
}

fn finish(mut r: MatchResult, best: Option<u16>) -> MatchResult {
    r.matched = best;
    r.memory_accesses = r.tree_accesses + r.leaf_accesses;
    r
}

fn min_id(a: Option<u16>, b: Option<u16>) -> Option<u16> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        _ => a.or(b),
    }
}

fn fetch(img: &MemoryImage, addr: u32) -> Result<&crate::memlayout::Word, EngineError> {
    img.word(addr).ok_or(EngineError::Dangling(addr))
}

/// Scans the rule list at `addr` until a match or the last-rule flag.
fn scan(
    img: &MemoryImage,
    addr: u32,
    h: &PacketHeader,
    accesses: &mut u32,
    compared: &mut u32,
) -> Result<Option<u16>, EngineError> {
    let mut a = addr;
    loop {
        let word = img.word(a).ok_or(if a == addr {
            EngineError::Dangling(a)
        } else {
            EngineError::Unterminated(addr)
        })?;
        *accesses += 1;
        *compared += RULES_PER_WORD as u32;
        for slot in 0..RULES_PER_WORD {
            let rw = word_rule(word, slot);
            if rw.matches(h) {
                return Ok(Some(rw.id()));
            }
            if rw.last() {
                return Ok(None);
            }
        }
        a += 1;
    }
}

/// Classifies against the in-memory tree, counting accesses as the image
/// layout would.
pub fn classify_tree(tree: &DecisionTree, h: &PacketHeader) -> MatchResult {
    let mut r = MatchResult {
        nodes_visited: 1,
        ..MatchResult::default()
    };
    let mut best = None;
    let mut id = tree.root();
    let mut is_root = true;
    loop {
        match tree.node(id) {
            Node::Empty => break,
            Node::Leaf { rules, .. } => {
                best = min_id(
                    best,
                    scan_ids(tree, rules, h, &mut r.leaf_accesses, &mut r.rules_compared),
                );
                break;
            }
            Node::Internal { cuts, children, pushed } => {
                if !is_root {
                    r.tree_accesses += 1;
                }
                is_root = false;
                if !pushed.is_empty() {
                    best = min_id(
                        best,
                        scan_ids(tree, pushed, h, &mut r.tree_accesses, &mut r.rules_compared),
                    );
                }
                r.tree_accesses += 1;
                r.nodes_visited += 1;
                id = children[extract_child_index(h, cuts)];
            }
        }
    }
    finish(r, best)
}

fn scan_ids(tree: &DecisionTree, ids: &[u16], h: &PacketHeader, accesses: &mut u32, compared: &mut u32) -> Option<u16> {
    for pair in ids.chunks(RULES_PER_WORD) {
        *accesses += 1;
        *compared += RULES_PER_WORD as u32;
        if let Some(&id) = pair.iter().find(|&&id| tree.rule(id).matches(h)) {
            return Some(id);
        }
    }
    None
}

/// Classifies every header, stopping at the first structural error.
pub fn classify_all(img: &MemoryImage, headers: &[PacketHeader]) -> Result<Vec<MatchResult>, EngineError> {
    headers.iter().map(|h| classify(img, h)).collect()
}
