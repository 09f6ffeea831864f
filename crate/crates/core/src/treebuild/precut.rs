use crate::ruleset::Rule;

use super::region::{Interval, Region, DIMS};

/// Outcome of pre-cutting a node region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Precut {
    /// The compacted region.
    pub region: Region,
    /// Number of halvings applied per dimension.
    pub counts: [u8; DIMS],
    /// Dimensions halved in each pass over the dimension order. The last
    /// pass, which finds nothing to halve, is not recorded.
    pub passes: Vec<[bool; DIMS]>,
}

impl Precut {
    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&c| u32::from(c)).sum()
    }
}

/// Repeatedly halves `region` along any dimension where every rule, clipped to
/// the region, falls inside the same half. Each pass visits the dimensions in
/// order and halves each at most once; passes repeat until none applies.
///
/// With no rules the region is returned unchanged.
pub fn precut(region: &Region, rules: &[Rule]) -> Precut {
    let cubes: Vec<Region> = rules.iter().map(Region::of_rule).collect();
    precut_cubes(region, &cubes)
}

pub(crate) fn precut_cubes(region: &Region, cubes: &[Region]) -> Precut {
    let mut out = Precut {
        region: *region,
        counts: [0; DIMS],
        passes: Vec::new(),
    };
    if cubes.is_empty() {
        return out;
    }
    loop {
        let mut pass = [false; DIMS];
        for (d, halved) in pass.iter_mut().enumerate() {
            if let Some(half) = single_half(&out.region.dims[d], cubes.iter().map(|c| &c.dims[d])) {
                out.region.dims[d] = half;
                out.counts[d] += 1;
                *halved = true;
            }
        }
        if !pass.contains(&true) {
            return out;
        }
        out.passes.push(pass);
    }
}

/// The half of `iv` holding every clipped projection, if they all share one.
fn single_half<'a>(iv: &Interval, mut projections: impl Iterator<Item = &'a Interval>) -> Option<Interval> {
    if iv.width() < 2 {
        return None;
    }
    let mid = (u64::from(iv.lo) + iv.width() / 2) as u32;
    let lower = Interval::new(iv.lo, mid - 1);
    let upper = Interval::new(mid, iv.hi);
    let first = projections.next()?.intersect(iv)?;
    let side = if first.hi < mid {
        lower
    } else if first.lo >= mid {
        upper
    } else {
        return None;
    };
    for p in projections {
        let clipped = p.intersect(iv)?;
        if !side.covers(&clipped) {
            return None;
        }
    }
    Some(side)
}
