use serde::{Deserialize, Serialize};

use crate::ruleset::{PacketHeader, Rule};

/// Number of classification dimensions.
pub const DIMS: usize = 5;

/// Field width in bits for each dimension: sip, dip, sport, dport, proto.
pub const DIM_BITS: [u8; DIMS] = [32, 32, 16, 16, 8];

pub const DIM_NAMES: [&str; DIMS] = ["sip", "dip", "sport", "dport", "proto"];

/// Closed integer interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn full(bits: u8) -> Self {
        Interval {
            lo: 0,
            hi: ((1u64 << bits) - 1) as u32,
        }
    }

    pub fn width(&self) -> u64 {
        u64::from(self.hi) - u64::from(self.lo) + 1
    }

    pub fn contains(&self, v: u32) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// `log2(width)` if the interval is a power-of-two block starting at a
    /// multiple of its width.
    pub fn free_bits(&self) -> Option<u8> {
        let w = self.width();
        (w.is_power_of_two() && u64::from(self.lo) % w == 0).then(|| w.trailing_zeros() as u8)
    }
}

/// An axis-aligned box in the 5-dimensional header space. Rule hypercubes and
/// tree-node regions share this type; only node regions are bit-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub dims: [Interval; DIMS],
}

impl Region {
    pub fn universe() -> Self {
        Region {
            dims: DIM_BITS.map(Interval::full),
        }
    }

    pub fn of_rule(r: &Rule) -> Self {
        Region {
            dims: [
                Interval::new(r.src.addr(), r.src.last()),
                Interval::new(r.dst.addr(), r.dst.last()),
                Interval::new(r.sport.lo().into(), r.sport.hi().into()),
                Interval::new(r.dport.lo().into(), r.dport.hi().into()),
                if r.proto.is_wildcard() {
                    Interval::full(8)
                } else {
                    Interval::new(r.proto.value().into(), r.proto.value().into())
                },
            ],
        }
    }

    /// Number of points, as `u128` since the universe holds 2^104.
    pub fn area(&self) -> u128 {
        self.dims.iter().map(|i| u128::from(i.width())).product()
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let mut dims = self.dims;
        for (d, iv) in dims.iter_mut().enumerate() {
            *iv = iv.intersect(&other.dims[d])?;
        }
        Some(Region { dims })
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.dims
            .iter()
            .zip(&other.dims)
            .all(|(a, b)| a.lo <= b.hi && b.lo <= a.hi)
    }

    pub fn covers(&self, other: &Region) -> bool {
        self.dims.iter().zip(&other.dims).all(|(a, b)| a.covers(b))
    }

    pub fn contains(&self, h: &PacketHeader) -> bool {
        self.dims.iter().zip(h.fields()).all(|(iv, v)| iv.contains(v))
    }

    pub fn is_aligned(&self) -> bool {
        self.dims.iter().all(|iv| iv.free_bits().is_some())
    }

    /// Free bits of dimension `d`.
    ///
    /// # Panics
    ///
    /// Panics if the dimension is not bit-aligned.
    pub fn free_bits(&self, d: usize) -> u8 {
        self.dims[d].free_bits().expect("node regions are bit-aligned")
    }
}
