use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ruleset::Rule;

use super::region::{Interval, Region, DIMS};
use super::BuildConfig;

/// Cut for one dimension: `ncuts` header bits ending (MSB side) at `bitpos`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DimCut {
    pub bitpos: u8,
    pub ncuts: u8,
}

/// Per-dimension bit slices selecting a child. Children are indexed by the
/// concatenation of the slices, sip most significant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CutSpec {
    pub dims: [DimCut; DIMS],
}

impl CutSpec {
    pub fn total_bits(&self) -> u32 {
        self.dims.iter().map(|c| u32::from(c.ncuts)).sum()
    }

    pub fn child_count(&self) -> usize {
        1 << self.total_bits()
    }

    /// Subregion of `region` covered by child `index`.
    pub fn child_region(&self, region: &Region, mut index: usize) -> Region {
        let mut out = *region;
        for d in (0..DIMS).rev() {
            let n = self.dims[d].ncuts;
            if n == 0 {
                continue;
            }
            let slice = (index & ((1 << n) - 1)) as u64;
            index >>= n;
            let shift = region.free_bits(d) - n;
            let lo = u64::from(region.dims[d].lo) + (slice << shift);
            let hi = lo + (1u64 << shift) - 1;
            out.dims[d] = Interval::new(lo as u32, hi as u32);
        }
        out
    }

    /// Range of child slices `[first, last]` that `cube` touches in dimension `d`.
    pub(crate) fn slice_span(&self, region: &Region, cube: &Region, d: usize) -> (u32, u32) {
        let n = self.dims[d].ncuts;
        if n == 0 {
            return (0, 0);
        }
        let iv = region.dims[d];
        let clipped = cube.dims[d].intersect(&iv).expect("rule intersects node region");
        let shift = region.free_bits(d) - n;
        ((clipped.lo - iv.lo) >> shift, (clipped.hi - iv.lo) >> shift)
    }

    /// Whether `cube` touches every child subregion.
    pub(crate) fn touches_all(&self, region: &Region, cube: &Region) -> bool {
        (0..DIMS).all(|d| {
            let (first, last) = self.slice_span(region, cube, d);
            first == 0 && last == (1u32 << self.dims[d].ncuts) - 1
        })
    }

    /// Child indices whose subregion intersects `cube`.
    pub(crate) fn touched_children(&self, region: &Region, cube: &Region) -> Vec<usize> {
        let mut out = vec![0usize];
        for d in 0..DIMS {
            let n = self.dims[d].ncuts;
            if n == 0 {
                continue;
            }
            let (first, last) = self.slice_span(region, cube, d);
            out = out
                .iter()
                .flat_map(|&prefix| (first..=last).map(move |s| (prefix << n) | s as usize))
                .collect();
        }
        out
    }

    /// Estimated storage of the cut: rule entries over all children plus the
    /// child pointers.
    pub(crate) fn space_estimate(&self, region: &Region, cubes: &[Region]) -> u64 {
        let entries: u64 = cubes
            .iter()
            .map(|c| {
                (0..DIMS)
                    .map(|d| {
                        let (first, last) = self.slice_span(region, c, d);
                        u64::from(last - first + 1)
                    })
                    .product::<u64>()
            })
            .sum();
        entries + self.child_count() as u64
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no dimension can separate the rules of this node")]
pub struct NoCuttableDimension;

/// Chooses the cut for an over-full node.
///
/// Candidate dimensions have width above one and at least two distinct rule
/// projections; of those, the ones with at least the mean distinct count are
/// cut. Bits are added round-robin while the space estimate stays within
/// `spfac * N`, the child count within `spfac * sqrt(N)`, and the total
/// within `index_bit_cap`. The first bit is always taken.
pub fn select_cuts(rules: &[Rule], region: &Region, cfg: &BuildConfig) -> Result<CutSpec, NoCuttableDimension> {
    let cubes: Vec<Region> = rules.iter().map(Region::of_rule).collect();
    select_cuts_cubes(&cubes, region, cfg)
}

pub(crate) fn select_cuts_cubes(
    cubes: &[Region],
    region: &Region,
    cfg: &BuildConfig,
) -> Result<CutSpec, NoCuttableDimension> {
    let distinct = distinct_projections(cubes, region);
    let eligible: Vec<usize> = (0..DIMS).filter(|&d| distinct[d] >= 2).collect();
    if eligible.is_empty() || cfg.index_bit_cap == 0 {
        return Err(NoCuttableDimension);
    }
    // distinct[d] >= mean, kept in integers
    let sum: usize = eligible.iter().map(|&d| distinct[d]).sum();
    let k = eligible.len();
    let chosen: Vec<usize> = eligible.into_iter().filter(|&d| distinct[d] * k >= sum).collect();
    Ok(grow_cuts(cubes, region, cfg, &chosen))
}

/// Per dimension, the number of distinct rule projections clipped to the
/// region; zero for dimensions of width one.
pub(crate) fn distinct_projections(cubes: &[Region], region: &Region) -> [usize; DIMS] {
    std::array::from_fn(|d| {
        if region.dims[d].width() == 1 {
            return 0;
        }
        let mut proj: Vec<Interval> = cubes
            .iter()
            .filter_map(|c| c.dims[d].intersect(&region.dims[d]))
            .collect();
        proj.sort_unstable_by_key(|iv| (iv.lo, iv.hi));
        proj.dedup();
        proj.len()
    })
}

/// Round-robin bit growth over `chosen` within the space, fan-out and bit
/// budgets. The first bit is always taken.
pub(crate) fn grow_cuts(cubes: &[Region], region: &Region, cfg: &BuildConfig, chosen: &[usize]) -> CutSpec {
    let free: [u8; DIMS] = std::array::from_fn(|d| region.free_bits(d));
    let n = cubes.len() as f64;
    let space_budget = cfg.spfac * n;
    let child_budget = cfg.spfac * n.sqrt();

    let mut spec = CutSpec::default();
    let mut open = [false; DIMS];
    for &d in chosen {
        open[d] = true;
        spec.dims[d].bitpos = free[d] - 1;
    }
    let mut first = true;
    loop {
        let mut grew = false;
        for &d in chosen {
            if !open[d] {
                continue;
            }
            if spec.total_bits() >= u32::from(cfg.index_bit_cap) {
                open = [false; DIMS];
                break;
            }
            if spec.dims[d].ncuts == free[d] {
                open[d] = false;
                continue;
            }
            let mut cand = spec;
            cand.dims[d].ncuts += 1;
            let fits =
                cand.child_count() as f64 <= child_budget && cand.space_estimate(region, cubes) as f64 <= space_budget;
            if first || fits {
                spec = cand;
                grew = true;
                first = false;
            } else {
                open[d] = false;
            }
        }
        if !grew {
            break;
        }
    }
    for c in spec.dims.iter_mut().filter(|c| c.ncuts == 0) {
        c.bitpos = 0;
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ruleset::{Prefix, ProtoSpec};
    use crate::treebuild::precut::precut;

    fn cfg(binth: usize, spfac: f64) -> BuildConfig {
        BuildConfig {
            binth,
            spfac,
            ..BuildConfig::default()
        }
    }

    fn rule(src: (u32, u8), dst: (u32, u8)) -> Rule {
        Rule {
            src: Prefix::new(src.0, src.1).unwrap(),
            dst: Prefix::new(dst.0, dst.1).unwrap(),
            ..Rule::wildcard(0)
        }
    }

    #[test]
    fn two_by_two_cuts_both_ips() {
        // src in {0/1, 128/1}, dst in {0/1, 128/1}: four quadrant rules.
        let rules = [
            rule((0, 1), (0, 1)),
            rule((0, 1), (0x8000_0000, 1)),
            rule((0x8000_0000, 1), (0, 1)),
            rule((0x8000_0000, 1), (0x8000_0000, 1)),
        ];
        let spec = select_cuts(&rules, &Region::universe(), &cfg(1, 100.0)).unwrap();
        assert!(spec.dims[0].ncuts >= 1 && spec.dims[1].ncuts >= 1);
        assert_eq!((spec.dims[0].bitpos, spec.dims[1].bitpos), (31, 31));
        // a tight budget stops after one bit per dimension
        let spec = select_cuts(&rules, &Region::universe(), &cfg(1, 2.0)).unwrap();
        assert_eq!(spec.dims[0], DimCut { bitpos: 31, ncuts: 1 });
        assert_eq!(spec.dims[1], DimCut { bitpos: 31, ncuts: 1 });
    }

    #[test]
    fn identical_point_rules_cannot_be_cut() {
        let r = Rule {
            src: Prefix::new(1, 32).unwrap(),
            dst: Prefix::new(2, 32).unwrap(),
            proto: ProtoSpec::exact(6),
            ..Rule::wildcard(0)
        };
        let rules = vec![r; 4];
        let region = precut(&Region::universe(), &rules).region;
        assert_eq!(select_cuts(&rules, &region, &cfg(1, 4.0)), Err(NoCuttableDimension));
        // identical wildcard rules give no separating dimension either
        let rules = vec![Rule::wildcard(0); 4];
        assert_eq!(
            select_cuts(&rules, &Region::universe(), &cfg(1, 4.0)),
            Err(NoCuttableDimension)
        );
    }

    #[test]
    fn protocol_parity() {
        let rules = [
            Rule {
                proto: ProtoSpec::exact(6),
                ..Rule::wildcard(0)
            },
            Rule {
                proto: ProtoSpec::exact(7),
                ..Rule::wildcard(1)
            },
        ];
        let region = precut(&Region::universe(), &rules).region;
        assert_eq!(region.dims[4], Interval::new(6, 7));
        let spec = select_cuts(&rules, &region, &cfg(1, 4.0)).unwrap();
        assert_eq!(spec.dims[4], DimCut { bitpos: 0, ncuts: 1 });
        assert_eq!(spec.total_bits(), 1);
    }

    #[test]
    fn bit_cap_respected() {
        let rules: Vec<Rule> = (0..64u32).map(|i| rule((i << 26, 6), (0, 0))).collect();
        let c = BuildConfig {
            binth: 1,
            spfac: 1000.0,
            index_bit_cap: 3,
            ..BuildConfig::default()
        };
        let spec = select_cuts(&rules, &Region::universe(), &c).unwrap();
        assert_eq!(spec.total_bits(), 3);
        assert_eq!(spec.dims[0], DimCut { bitpos: 31, ncuts: 3 });
    }

    #[test]
    fn child_geometry() {
        let spec = CutSpec {
            dims: [
                DimCut { bitpos: 31, ncuts: 2 },
                DimCut::default(),
                DimCut::default(),
                DimCut::default(),
                DimCut { bitpos: 7, ncuts: 1 },
            ],
        };
        let u = Region::universe();
        assert_eq!(spec.child_count(), 8);
        let c5 = spec.child_region(&u, 0b101);
        assert_eq!(c5.dims[0], Interval::new(0x8000_0000, 0xbfff_ffff));
        assert_eq!(c5.dims[4], Interval::new(128, 255));
        let total: u128 = (0..8).map(|i| spec.child_region(&u, i).area()).sum();
        assert_eq!(total, u.area());

        let mut cube = Region::universe();
        cube.dims[0] = Interval::new(0x4000_0000, 0xbfff_ffff);
        assert_eq!(spec.touched_children(&u, &cube), vec![2, 3, 4, 5]);
        assert!(!spec.touches_all(&u, &cube));
        assert!(spec.touches_all(&u, &Region::universe()));
        assert_eq!(spec.space_estimate(&u, &[cube]), 4 + 8);
    }
}
