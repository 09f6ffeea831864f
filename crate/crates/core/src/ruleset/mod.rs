//! 5-tuple rules, packet headers and the linear-search reference classifier.

mod classbench;
mod synth;
mod trace;

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classbench::{format_classbench, parse_classbench};
pub use synth::{gen_synthetic, Profile};
pub use trace::{format_trace, gen_trace, parse_trace, TraceEntry};

/// Largest number of rules a ruleset may hold; rule ids are 16 bits wide.
pub const MAX_RULES: usize = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("prefix length {0} exceeds 32")]
    PrefixLength(u8),
    #[error("port range {lo}:{hi} is inverted")]
    InvertedRange { lo: u16, hi: u16 },
    #[error("ruleset holds {0} rules, at most 65536 are addressable")]
    TooManyRules(usize),
}

/// An IPv4 prefix in canonical form: every bit below the prefix length is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prefix {
    addr: u32,
    len: u8,
}

// `len` is the prefix length, not a collection size.
#[allow(clippy::len_without_is_empty)]
impl Prefix {
    pub const ANY: Prefix = Prefix { addr: 0, len: 0 };

    /// Builds a prefix, clearing any address bits beyond `len`.
    pub fn new(addr: u32, len: u8) -> Result<Self, RuleError> {
        if len > 32 {
            return Err(RuleError::PrefixLength(len));
        }
        Ok(Prefix {
            addr: addr & prefix_mask(len),
            len,
        })
    }

    pub fn addr(&self) -> u32 {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_wildcard(&self) -> bool {
        self.len == 0
    }

    /// Last address covered by the prefix.
    pub fn last(&self) -> u32 {
        self.addr | !prefix_mask(self.len)
    }

    pub fn contains(&self, ip: u32) -> bool {
        (ip ^ self.addr) & prefix_mask(self.len) == 0
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", Ipv4Addr::from(self.addr), self.len)
    }
}

pub(crate) fn prefix_mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - u32::from(len))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortRange {
    lo: u16,
    hi: u16,
}

impl PortRange {
    pub const ANY: PortRange = PortRange { lo: 0, hi: u16::MAX };

    pub fn new(lo: u16, hi: u16) -> Result<Self, RuleError> {
        if lo > hi {
            return Err(RuleError::InvertedRange { lo, hi });
        }
        Ok(PortRange { lo, hi })
    }

    pub fn exact(port: u16) -> Self {
        PortRange { lo: port, hi: port }
    }

    pub fn lo(&self) -> u16 {
        self.lo
    }

    pub fn hi(&self) -> u16 {
        self.hi
    }

    pub fn contains(&self, port: u16) -> bool {
        self.lo <= port && port <= self.hi
    }
}

/// Protocol match: an exact 8-bit value or a wildcard (stored with value 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtoSpec {
    value: u8,
    wildcard: bool,
}

impl ProtoSpec {
    pub const ANY: ProtoSpec = ProtoSpec {
        value: 0,
        wildcard: true,
    };

    pub fn exact(value: u8) -> Self {
        ProtoSpec { value, wildcard: false }
    }

    pub fn value(&self) -> u8 {
        self.value
    }

    pub fn is_wildcard(&self) -> bool {
        self.wildcard
    }

    pub fn matches(&self, proto: u8) -> bool {
        self.wildcard || self.value == proto
    }
}

/// A 5-tuple filter. `priority` 0 is the highest; `id` equals `priority` for
/// rulesets built by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub priority: u32,
    pub id: u16,
    pub src: Prefix,
    pub dst: Prefix,
    pub sport: PortRange,
    pub dport: PortRange,
    pub proto: ProtoSpec,
}

impl Rule {
    /// A rule matching every packet.
    pub fn wildcard(id: u16) -> Self {
        Rule {
            priority: u32::from(id),
            id,
            src: Prefix::ANY,
            dst: Prefix::ANY,
            sport: PortRange::ANY,
            dport: PortRange::ANY,
            proto: ProtoSpec::ANY,
        }
    }

    pub fn matches(&self, h: &PacketHeader) -> bool {
        matches(self, h)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketHeader {
    pub sip: u32,
    pub dip: u32,
    pub sport: u16,
    pub dport: u16,
    pub proto: u8,
}

impl PacketHeader {
    /// Header fields widened to `u32`, in classification-dimension order.
    pub fn fields(&self) -> [u32; 5] {
        [
            self.sip,
            self.dip,
            u32::from(self.sport),
            u32::from(self.dport),
            u32::from(self.proto),
        ]
    }
}

/// A priority-ordered list of rules. Rule `i` has priority `i` and id `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ruleset {
    rules: Vec<Rule>,
}

impl Ruleset {
    pub fn empty() -> Self {
        Ruleset::default()
    }

    /// Takes rules in priority order and renumbers priorities and ids to match.
    pub fn from_rules(mut rules: Vec<Rule>) -> Result<Self, RuleError> {
        if rules.len() > MAX_RULES {
            return Err(RuleError::TooManyRules(rules.len()));
        }
        for (i, r) in rules.iter_mut().enumerate() {
            r.priority = i as u32;
            r.id = i as u16;
        }
        Ok(Ruleset { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: u16) -> Option<&Rule> {
        self.rules.get(usize::from(id))
    }
}

impl std::ops::Index<usize> for Ruleset {
    type Output = Rule;

    fn index(&self, i: usize) -> &Rule {
        &self.rules[i]
    }
}

pub fn matches(r: &Rule, h: &PacketHeader) -> bool {
    r.src.contains(h.sip)
        && r.dst.contains(h.dip)
        && r.sport.contains(h.sport)
        && r.dport.contains(h.dport)
        && r.proto.matches(h.proto)
}

/// First-match linear search; the reference every other classification path
/// is checked against.
pub fn classify_linear(rs: &Ruleset, h: &PacketHeader) -> Option<u16> {
    rs.rules.iter().find(|r| matches(r, h)).map(|r| r.id)
}
