use thiserror::Error;

use crate::ruleset::{PacketHeader, PortRange, Prefix, ProtoSpec, Rule};
use crate::treebuild::{CutSpec, DimCut, DIMS, DIM_BITS, MAX_INDEX_BITS};

use super::bits::{get_bits, set_bits};
use super::{Word, WORD_U64S};

pub const IP_BITS: usize = 35;
pub const RULE_BITS: usize = 160;
pub const CHILD_ENTRY_BITS: usize = 32;
/// Child entries packed into one memory word.
pub const ENTRIES_PER_WORD: usize = 10;
/// Rule words packed into one memory word.
pub const RULES_PER_WORD: usize = 2;
/// Width of every word address field.
pub const ADDR_BITS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("value {0:#x} is wider than 35 bits")]
    IpWidth(u64),
    #[error("short-form prefix length {0} exceeds 28")]
    IpLength(u8),
    #[error("prefix address has bits set beyond its length")]
    HostBits,
    #[error("port range {lo}..{hi} is inverted")]
    PortRange { lo: u16, hi: u16 },
    #[error("wildcard protocol with nonzero value {0}")]
    ProtoValue(u8),
    #[error("bits above 160 set in a rule word")]
    RuleWidth,
    #[error("child entry {0:#010x} has an invalid type or reserved bits set")]
    ChildEntry(u32),
    #[error("invalid cut for dimension {dim}: bitpos {bitpos}, ncuts {ncuts}")]
    Cut { dim: usize, bitpos: u8, ncuts: u8 },
    #[error("cut uses {0} index bits")]
    IndexBits(u32),
    #[error("reserved header bits set")]
    HeaderReserved,
    #[error("root kind {0} is not defined")]
    RootKind(u64),
}

/// A prefix packed into 35 bits.
///
/// Short form (bit 0 clear): bits 1..6 length, bits 7..34 the top 28 address
/// bits. Long form (bit 0 set): bits 1..2 `length - 29`, bits 3..34 the
/// address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncodedIp(u64);

impl EncodedIp {
    pub fn from_bits(v: u64) -> Result<Self, EncodingError> {
        if v >> IP_BITS != 0 {
            return Err(EncodingError::IpWidth(v));
        }
        Ok(EncodedIp(v))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_long(self) -> bool {
        self.0 & 1 == 1
    }
}

pub fn encode_ip(p: Prefix) -> EncodedIp {
    let len = u64::from(p.len());
    let addr = u64::from(p.addr());
    if p.len() <= 28 {
        EncodedIp((len << 1) | ((addr >> 4) << 7))
    } else {
        EncodedIp(1 | ((len - 29) << 1) | (addr << 3))
    }
}

pub fn decode_ip(e: EncodedIp) -> Result<Prefix, EncodingError> {
    let v = e.0;
    let (addr, len) = if e.is_long() {
        ((v >> 3) as u32, 29 + ((v >> 1) & 0b11) as u8)
    } else {
        let len = ((v >> 1) & 0x3f) as u8;
        if len > 28 {
            return Err(EncodingError::IpLength(len));
        }
        (((v >> 7) as u32) << 4, len)
    };
    let p = Prefix::new(addr, len).expect("length checked above");
    if p.addr() != addr {
        return Err(EncodingError::HostBits);
    }
    Ok(p)
}

/// One 160-bit rule slot, stored in the low bits of three `u64`s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RuleWord(pub(crate) [u64; 3]);

// Field offsets inside a rule word.
const R_LAST: usize = 0;
const R_ID: usize = 1;
const R_PROTO: usize = 17;
const R_PROTO_ANY: usize = 25;
const R_SPORT_LO: usize = 26;
const R_SPORT_HI: usize = 42;
const R_DPORT_LO: usize = 58;
const R_DPORT_HI: usize = 74;
const R_SRC: usize = 90;
const R_DST: usize = 125;

impl RuleWord {
    pub fn from_limbs(limbs: [u64; 3]) -> Result<Self, EncodingError> {
        if limbs[2] >> (RULE_BITS - 128) != 0 {
            return Err(EncodingError::RuleWidth);
        }
        Ok(RuleWord(limbs))
    }

    pub fn limbs(&self) -> [u64; 3] {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 3]
    }

    pub fn last(&self) -> bool {
        get_bits(&self.0, R_LAST, 1) == 1
    }

    pub fn id(&self) -> u16 {
        get_bits(&self.0, R_ID, 16) as u16
    }

    /// Matches a header against the packed fields without building a [`Rule`].
    /// Assumes a word that [`decode_rule`] accepts.
    pub fn matches(&self, h: &PacketHeader) -> bool {
        let w = &self.0;
        let port = |lo: usize, hi: usize, v: u16| {
            let v = u64::from(v);
            get_bits(w, lo, 16) <= v && v <= get_bits(w, hi, 16)
        };
        (get_bits(w, R_PROTO_ANY, 1) == 1 || get_bits(w, R_PROTO, 8) == u64::from(h.proto))
            && port(R_SPORT_LO, R_SPORT_HI, h.sport)
            && port(R_DPORT_LO, R_DPORT_HI, h.dport)
            && ip_matches(get_bits(w, R_SRC, IP_BITS), h.sip)
            && ip_matches(get_bits(w, R_DST, IP_BITS), h.dip)
    }
}

fn ip_matches(e: u64, ip: u32) -> bool {
    let (addr, len) = if e & 1 == 1 {
        ((e >> 3) as u32, 29 + ((e >> 1) & 0b11) as u32)
    } else {
        (((e >> 7) as u32) << 4, ((e >> 1) & 0x3f) as u32)
    };
    let mask = u32::MAX.checked_shl(32 - len).unwrap_or(0);
    ip & mask == addr
}

pub fn encode_rule(r: &Rule, last: bool) -> RuleWord {
    let mut w = [0u64; 3];
    set_bits(&mut w, R_LAST, 1, u64::from(last));
    set_bits(&mut w, R_ID, 16, u64::from(r.id));
    set_bits(&mut w, R_PROTO, 8, u64::from(r.proto.value()));
    set_bits(&mut w, R_PROTO_ANY, 1, u64::from(r.proto.is_wildcard()));
    set_bits(&mut w, R_SPORT_LO, 16, u64::from(r.sport.lo()));
    set_bits(&mut w, R_SPORT_HI, 16, u64::from(r.sport.hi()));
    set_bits(&mut w, R_DPORT_LO, 16, u64::from(r.dport.lo()));
    set_bits(&mut w, R_DPORT_HI, 16, u64::from(r.dport.hi()));
    set_bits(&mut w, R_SRC, IP_BITS, encode_ip(r.src).bits());
    set_bits(&mut w, R_DST, IP_BITS, encode_ip(r.dst).bits());
    RuleWord(w)
}

/// Inverse of [`encode_rule`]. The decoded priority equals the id.
pub fn decode_rule(w: &RuleWord) -> Result<(Rule, bool), EncodingError> {
    let b = &w.0;
    let port = |lo: usize, hi: usize| {
        let (lo, hi) = (get_bits(b, lo, 16) as u16, get_bits(b, hi, 16) as u16);
        PortRange::new(lo, hi).map_err(|_| EncodingError::PortRange { lo, hi })
    };
    let value = get_bits(b, R_PROTO, 8) as u8;
    let proto = if get_bits(b, R_PROTO_ANY, 1) == 1 {
        if value != 0 {
            return Err(EncodingError::ProtoValue(value));
        }
        ProtoSpec::ANY
    } else {
        ProtoSpec::exact(value)
    };
    let id = w.id();
    let rule = Rule {
        priority: u32::from(id),
        id,
        src: decode_ip(EncodedIp(get_bits(b, R_SRC, IP_BITS)))?,
        dst: decode_ip(EncodedIp(get_bits(b, R_DST, IP_BITS)))?,
        sport: port(R_SPORT_LO, R_SPORT_HI)?,
        dport: port(R_DPORT_LO, R_DPORT_HI)?,
        proto,
    };
    Ok((rule, w.last()))
}

/// Rule slot `slot` (0 = low half) of a memory word.
pub fn word_rule(word: &Word, slot: usize) -> RuleWord {
    let off = slot * RULE_BITS;
    RuleWord([
        get_bits(word, off, 64),
        get_bits(word, off + 64, 64),
        get_bits(word, off + 128, 32),
    ])
}

pub fn put_rule(word: &mut Word, slot: usize, r: &RuleWord) {
    let off = slot * RULE_BITS;
    set_bits(word, off, 64, r.0[0]);
    set_bits(word, off + 64, 64, r.0[1]);
    set_bits(word, off + 128, 32, r.0[2]);
}

/// Pointer from an internal node to one child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChildEntry {
    Empty,
    Internal(u32),
    Leaf(u32),
}

impl ChildEntry {
    pub fn to_bits(self) -> u32 {
        match self {
            ChildEntry::Empty => 0,
            ChildEntry::Internal(a) => 0b01 | (a << 2),
            ChildEntry::Leaf(a) => 0b10 | (a << 2),
        }
    }

    pub fn from_bits(v: u32) -> Result<Self, EncodingError> {
        if v >> (2 + ADDR_BITS) != 0 {
            return Err(EncodingError::ChildEntry(v));
        }
        let addr = v >> 2;
        match v & 0b11 {
            0b00 if addr == 0 => Ok(ChildEntry::Empty),
            0b01 => Ok(ChildEntry::Internal(addr)),
            0b10 => Ok(ChildEntry::Leaf(addr)),
            _ => Err(EncodingError::ChildEntry(v)),
        }
    }
}

pub fn word_entry(word: &Word, i: usize) -> Result<ChildEntry, EncodingError> {
    ChildEntry::from_bits(get_bits(word, i * CHILD_ENTRY_BITS, CHILD_ENTRY_BITS) as u32)
}

pub fn put_entry(word: &mut Word, i: usize, e: ChildEntry) {
    set_bits(word, i * CHILD_ENTRY_BITS, CHILD_ENTRY_BITS, u64::from(e.to_bits()));
}

// Header field offsets.
const H_DIM: usize = 10;
const H_CHILD: usize = 50;
const H_PUSHED: usize = 74;
const H_PUSHED_FLAG: usize = 98;
const H_END: usize = 99;
const ROOT_KIND: usize = 99;

/// Internal node header: per-dimension cut bits, then the child array and
/// optional pushed-list addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeHeaderWord {
    pub cuts: CutSpec,
    pub child_base: u32,
    pub pushed_base: Option<u32>,
}

impl NodeHeaderWord {
    pub fn to_word(&self) -> Word {
        let mut w = [0u64; WORD_U64S];
        for (d, c) in self.cuts.dims.iter().enumerate() {
            set_bits(&mut w, d * H_DIM, 6, u64::from(c.bitpos));
            set_bits(&mut w, d * H_DIM + 6, 4, u64::from(c.ncuts));
        }
        set_bits(&mut w, H_CHILD, ADDR_BITS, u64::from(self.child_base));
        if let Some(p) = self.pushed_base {
            set_bits(&mut w, H_PUSHED, ADDR_BITS, u64::from(p));
            set_bits(&mut w, H_PUSHED_FLAG, 1, 1);
        }
        w
    }

    pub fn from_word(w: &Word) -> Result<Self, EncodingError> {
        if !reserved_clear(w, H_END) {
            return Err(EncodingError::HeaderReserved);
        }
        let mut cuts = CutSpec::default();
        for (d, c) in cuts.dims.iter_mut().enumerate() {
            *c = DimCut {
                bitpos: get_bits(w, d * H_DIM, 6) as u8,
                ncuts: get_bits(w, d * H_DIM + 6, 4) as u8,
            };
            let ok = if c.ncuts == 0 {
                c.bitpos == 0
            } else {
                c.bitpos < DIM_BITS[d] && c.ncuts <= c.bitpos + 1
            };
            if !ok {
                return Err(EncodingError::Cut {
                    dim: d,
                    bitpos: c.bitpos,
                    ncuts: c.ncuts,
                });
            }
        }
        if cuts.total_bits() > u32::from(MAX_INDEX_BITS) {
            return Err(EncodingError::IndexBits(cuts.total_bits()));
        }
        let pushed = get_bits(w, H_PUSHED, ADDR_BITS) as u32;
        let pushed_base = match get_bits(w, H_PUSHED_FLAG, 1) {
            1 => Some(pushed),
            _ if pushed != 0 => return Err(EncodingError::HeaderReserved),
            _ => None,
        };
        Ok(NodeHeaderWord {
            cuts,
            child_base: get_bits(w, H_CHILD, ADDR_BITS) as u32,
            pushed_base,
        })
    }
}

fn reserved_clear(w: &Word, from: usize) -> bool {
    (from..WORD_U64S * 64)
        .step_by(64)
        .all(|off| get_bits(w, off, (WORD_U64S * 64 - off).min(64)) == 0)
}

/// Root registers. An internal root keeps its header here instead of in
/// memory; a leaf root keeps the address of its rule list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RootBlock {
    Empty,
    Internal(NodeHeaderWord),
    Leaf(u32),
}

impl RootBlock {
    /// Header layout plus a 2-bit kind at bit 99 (0 Empty, 1 Internal, 2 Leaf).
    pub fn to_word(&self) -> Word {
        let (mut w, kind) = match self {
            RootBlock::Empty => ([0; WORD_U64S], 0),
            RootBlock::Internal(h) => (h.to_word(), 1),
            RootBlock::Leaf(a) => {
                let mut w = [0; WORD_U64S];
                set_bits(&mut w, H_CHILD, ADDR_BITS, u64::from(*a));
                (w, 2)
            }
        };
        set_bits(&mut w, ROOT_KIND, 2, kind);
        w
    }

    pub fn from_word(w: &Word) -> Result<Self, EncodingError> {
        let kind = get_bits(w, ROOT_KIND, 2);
        let mut rest = *w;
        set_bits(&mut rest, ROOT_KIND, 2, 0);
        let zero_except = |off: usize, width: usize| {
            let mut r = rest;
            set_bits(&mut r, off, width, 0);
            r == [0; WORD_U64S]
        };
        match kind {
            0 if rest == [0; WORD_U64S] => Ok(RootBlock::Empty),
            1 => Ok(RootBlock::Internal(NodeHeaderWord::from_word(&rest)?)),
            2 if zero_except(H_CHILD, ADDR_BITS) => Ok(RootBlock::Leaf(get_bits(&rest, H_CHILD, ADDR_BITS) as u32)),
            0 | 2 => Err(EncodingError::HeaderReserved),
            k => Err(EncodingError::RootKind(k)),
        }
    }
}

const _: () = assert!(DIMS * H_DIM == H_CHILD);
