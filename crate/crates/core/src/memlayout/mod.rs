//! Bit-exact word encodings and the word-addressed memory image.
//!
//! Memory is an array of 320-bit words. An internal node takes one header
//! word followed by its child-entry words; a leaf or pushed list takes
//! `ceil(rules / 2)` words of two rule slots each. The root header lives in a
//! separate root block and costs no memory.

mod bits;
mod encoding;
mod file;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebuild::{DecisionTree, Node, NodeId};

pub use encoding::{
    decode_ip, decode_rule, encode_ip, encode_rule, put_entry, put_rule, word_entry, word_rule, ChildEntry, EncodedIp,
    EncodingError, NodeHeaderWord, RootBlock, RuleWord, ADDR_BITS, CHILD_ENTRY_BITS, ENTRIES_PER_WORD, IP_BITS,
    RULES_PER_WORD, RULE_BITS,
};
pub use file::{load_image, store_image, ImageError, FORMAT_VERSION, MAGIC};

pub const WORD_BITS: usize = 320;
pub const WORD_BYTES: usize = WORD_BITS / 8;
pub const WORD_U64S: usize = WORD_BITS / 64;
/// Addresses are 24 bits wide.
pub const MAX_WORDS: usize = 1 << ADDR_BITS;

pub type Word = [u64; WORD_U64S];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("image needs more than {MAX_WORDS} words")]
    TooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuralError {
    #[error("root block: {0}")]
    Root(EncodingError),
    #[error("word {addr}: {source}")]
    Encoding { addr: u32, source: EncodingError },
    #[error("address {addr} is outside the image")]
    Dangling { addr: u32 },
    #[error("rule list at word {addr} has no last-rule flag")]
    Unterminated { addr: u32 },
    #[error("word {addr}: unused slot is not zero")]
    Padding { addr: u32 },
    #[error("word {addr}: rule id {id} out of range")]
    RuleId { addr: u32, id: u16 },
    #[error("rule list at word {addr} is not in priority order")]
    Order { addr: u32 },
    #[error("internal node at word {addr} does not follow its parent")]
    Backward { addr: u32 },
    #[error("structures overlap at word {addr}")]
    Overlap { addr: u32 },
    #[error("word {addr} belongs to no structure")]
    Unused { addr: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Header,
    ChildEntries,
    Leaf,
    Pushed,
}

/// A run of words holding one header, child array or rule list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Structure {
    pub kind: StructureKind,
    pub addr: u32,
    pub words: u32,
}

/// A validated memory image: root registers plus the word array.
///
/// Every word belongs to exactly one reachable structure, every address is in
/// range, and every rule list ends with a last-rule flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryImage {
    root: RootBlock,
    rule_count: u32,
    words: Vec<Word>,
}

impl MemoryImage {
    pub fn from_parts(root: RootBlock, rule_count: u32, words: Vec<Word>) -> Result<Self, StructuralError> {
        let img = MemoryImage {
            root,
            rule_count,
            words,
        };
        img.scan()?;
        Ok(img)
    }

    pub fn root(&self) -> &RootBlock {
        &self.root
    }

    /// Size of the ruleset the image was built from.
    pub fn rule_count(&self) -> u32 {
        self.rule_count
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, addr: u32) -> Option<&Word> {
        self.words.get(addr as usize)
    }

    /// Every structure in address order. Shared leaves appear once.
    pub fn structures(&self) -> Vec<Structure> {
        self.scan().expect("image validated on construction")
    }

    fn scan(&self) -> Result<Vec<Structure>, StructuralError> {
        let mut found: HashMap<u32, Structure> = HashMap::new();
        // (header, address the header was read from; None for the root)
        let mut stack: Vec<(NodeHeaderWord, Option<u32>)> = Vec::new();
        match self.root {
            RootBlock::Empty => {}
            RootBlock::Leaf(a) => claim(&mut found, self.rule_list(a, StructureKind::Leaf)?)?,
            RootBlock::Internal(h) => stack.push((h, None)),
        }
        while let Some((h, at)) = stack.pop() {
            let n = h.cuts.child_count();
            let entry_words = n.div_ceil(ENTRIES_PER_WORD) as u32;
            self.range(h.child_base, entry_words)?;
            claim(
                &mut found,
                Structure {
                    kind: StructureKind::ChildEntries,
                    addr: h.child_base,
                    words: entry_words,
                },
            )?;
            if let Some(p) = h.pushed_base {
                claim(&mut found, self.rule_list(p, StructureKind::Pushed)?)?;
            }
            for i in 0..n {
                let addr = h.child_base + (i / ENTRIES_PER_WORD) as u32;
                let entry = word_entry(&self.words[addr as usize], i % ENTRIES_PER_WORD)
                    .map_err(|source| StructuralError::Encoding { addr, source })?;
                match entry {
                    ChildEntry::Empty => {}
                    ChildEntry::Leaf(a) => {
                        if found.get(&a).map(|s| s.kind) != Some(StructureKind::Leaf) {
                            claim(&mut found, self.rule_list(a, StructureKind::Leaf)?)?;
                        }
                    }
                    ChildEntry::Internal(a) => {
                        // forward-only pointers rule out cycles
                        if at.is_some_and(|at| a <= at) {
                            return Err(StructuralError::Backward { addr: a });
                        }
                        let w = self.range(a, 1)?;
                        let child = NodeHeaderWord::from_word(&w[0])
                            .map_err(|source| StructuralError::Encoding { addr: a, source })?;
                        let s = Structure {
                            kind: StructureKind::Header,
                            addr: a,
                            words: 1,
                        };
                        if found.get(&a) != Some(&s) {
                            claim(&mut found, s)?;
                            stack.push((child, Some(a)));
                        }
                    }
                }
            }
            // unused entries of the last child word stay zero
            let last = (h.child_base + entry_words - 1) as usize;
            for i in n - (entry_words as usize - 1) * ENTRIES_PER_WORD..ENTRIES_PER_WORD {
                if word_entry(&self.words[last], i) != Ok(ChildEntry::Empty) {
                    return Err(StructuralError::Padding { addr: last as u32 });
                }
            }
        }

        let mut out: Vec<Structure> = found.into_values().collect();
        out.sort_unstable_by_key(|s| s.addr);
        let mut next = 0u32;
        for s in &out {
            if s.addr < next {
                return Err(StructuralError::Overlap { addr: s.addr });
            }
            if s.addr > next {
                return Err(StructuralError::Unused { addr: next });
            }
            next = s.addr + s.words;
        }
        if (next as usize) < self.words.len() {
            return Err(StructuralError::Unused { addr: next });
        }
        Ok(out)
    }

    fn range(&self, addr: u32, n: u32) -> Result<&[Word], StructuralError> {
        let (a, n) = (addr as usize, n as usize);
        if a + n > self.words.len() {
            return Err(StructuralError::Dangling {
                addr: addr.max(self.words.len() as u32),
            });
        }
        Ok(&self.words[a..a + n])
    }

    /// Checks the rule list starting at `addr` and returns its extent.
    fn rule_list(&self, addr: u32, kind: StructureKind) -> Result<Structure, StructuralError> {
        self.range(addr, 1)?;
        let mut prev: Option<u16> = None;
        for a in addr as usize..self.words.len() {
            let at = a as u32;
            for slot in 0..RULES_PER_WORD {
                let rw = word_rule(&self.words[a], slot);
                let (_, last) = decode_rule(&rw).map_err(|source| StructuralError::Encoding { addr: at, source })?;
                let id = rw.id();
                if u32::from(id) >= self.rule_count {
                    return Err(StructuralError::RuleId { addr: at, id });
                }
                if prev.is_some_and(|p| p >= id) {
                    return Err(StructuralError::Order { addr });
                }
                prev = Some(id);
                if last {
                    if slot == 0 && !word_rule(&self.words[a], 1).is_zero() {
                        return Err(StructuralError::Padding { addr });
                    }
                    return Ok(Structure {
                        kind,
                        addr,
                        words: at - addr + 1,
                    });
                }
            }
        }
        Err(StructuralError::Unterminated { addr })
    }
}

fn claim(found: &mut HashMap<u32, Structure>, s: Structure) -> Result<(), StructuralError> {
    match found.insert(s.addr, s) {
        Some(prev) if prev != s => Err(StructuralError::Overlap { addr: s.addr }),
        _ => Ok(()),
    }
}

/// Word counts of an image, split by structure kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub words: u64,
    pub bytes: u64,
    pub header_words: u64,
    pub child_entry_words: u64,
    pub leaf_words: u64,
    pub pushed_words: u64,
}

pub fn memory_report(img: &MemoryImage) -> MemoryReport {
    let mut r = MemoryReport {
        words: img.len() as u64,
        bytes: (img.len() * WORD_BYTES) as u64,
        header_words: 0,
        child_entry_words: 0,
        leaf_words: 0,
        pushed_words: 0,
    };
    for s in img.structures() {
        let n = u64::from(s.words);
        match s.kind {
            StructureKind::Header => r.header_words += n,
            StructureKind::ChildEntries => r.child_entry_words += n,
            StructureKind::Leaf => r.leaf_words += n,
            StructureKind::Pushed => r.pushed_words += n,
        }
    }
    r
}

/// Serializes `tree` into a memory image.
///
/// Nodes are placed depth first: an internal node's header, its child
/// entries and its pushed list come before its children. Merged leaves are
/// written once and share an address.
pub fn layout(tree: &DecisionTree) -> Result<MemoryImage, LayoutError> {
    let mut w = Writer {
        tree,
        words: Vec::new(),
        leaves: HashMap::new(),
    };
    let root = match tree.node(tree.root()) {
        Node::Empty => RootBlock::Empty,
        Node::Leaf { rules, .. } if rules.is_empty() => RootBlock::Empty,
        Node::Leaf { .. } => match w.place(tree.root())? {
            ChildEntry::Leaf(a) => RootBlock::Leaf(a),
            _ => unreachable!("leaf placed as leaf"),
        },
        Node::Internal { .. } => RootBlock::Internal(w.internal(tree.root())?),
    };
    Ok(MemoryImage {
        root,
        rule_count: tree.ruleset().len() as u32,
        words: w.words,
    })
}

struct Writer<'a> {
    tree: &'a DecisionTree,
    words: Vec<Word>,
    leaves: HashMap<NodeId, u32>,
}

impl Writer<'_> {
    fn alloc(&mut self, n: usize) -> Result<u32, LayoutError> {
        let at = self.words.len();
        if at + n > MAX_WORDS {
            return Err(LayoutError::TooLarge);
        }
        self.words.resize(at + n, [0; WORD_U64S]);
        Ok(at as u32)
    }

    fn rule_list(&mut self, ids: &[u16]) -> Result<u32, LayoutError> {
        let at = self.alloc(ids.len().div_ceil(RULES_PER_WORD))?;
        for (i, &id) in ids.iter().enumerate() {
            let rw = encode_rule(self.tree.rule(id), i + 1 == ids.len());
            put_rule(
                &mut self.words[at as usize + i / RULES_PER_WORD],
                i % RULES_PER_WORD,
                &rw,
            );
        }
        Ok(at)
    }

    fn place(&mut self, id: NodeId) -> Result<ChildEntry, LayoutError> {
        match self.tree.node(id) {
            Node::Empty => Ok(ChildEntry::Empty),
            Node::Leaf { rules, .. } if rules.is_empty() => Ok(ChildEntry::Empty),
            Node::Leaf { rules, .. } => {
                if let Some(&a) = self.leaves.get(&id) {
                    return Ok(ChildEntry::Leaf(a));
                }
                let a = self.rule_list(rules)?;
                self.leaves.insert(id, a);
                Ok(ChildEntry::Leaf(a))
            }
            Node::Internal { .. } => {
                let at = self.alloc(1)?;
                let h = self.internal(id)?;
                self.words[at as usize] = h.to_word();
                Ok(ChildEntry::Internal(at))
            }
        }
    }

    fn internal(&mut self, id: NodeId) -> Result<NodeHeaderWord, LayoutError> {
        let Node::Internal { cuts, children, pushed } = self.tree.node(id) else {
            unreachable!("caller checked the kind")
        };
        let child_base = self.alloc(children.len().div_ceil(ENTRIES_PER_WORD))?;
        let pushed_base = match pushed.is_empty() {
            true => None,
            false => Some(self.rule_list(pushed)?),
        };
        for (i, &c) in children.iter().enumerate() {
            let e = self.place(c)?;
            put_entry(
                &mut self.words[child_base as usize + i / ENTRIES_PER_WORD],
                i % ENTRIES_PER_WORD,
                e,
            );
        }
        Ok(NodeHeaderWord {
            cuts: *cuts,
            child_base,
            pushed_base,
        })
    }
}
