use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PortRange, Prefix, ProtoSpec, Rule, Ruleset, MAX_RULES};

/// Shape of a synthetic ruleset, loosely following the three ClassBench
/// seed families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Access-control lists: specific prefixes, exact destination ports.
    Acl,
    /// Firewalls: many wildcard fields and wide port ranges.
    Fw,
    /// IP chains: a mix of the two.
    Ipc,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Acl, Profile::Fw, Profile::Ipc];

    fn stream(self) -> u64 {
        match self {
            Profile::Acl => 1,
            Profile::Fw => 2,
            Profile::Ipc => 3,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Acl => "acl",
            Profile::Fw => "fw",
            Profile::Ipc => "ipc",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_end_matches("-like") {
            "acl" => Ok(Profile::Acl),
            "fw" => Ok(Profile::Fw),
            "ipc" => Ok(Profile::Ipc),
            _ => Err(format!("unknown profile '{s}' (expected acl, fw or ipc)")),
        }
    }
}

const COMMON_PORTS: [u16; 12] = [20, 21, 22, 23, 25, 53, 80, 110, 123, 161, 443, 8080];

/// Generates `n` rules deterministically from `(seed, n, profile)`.
///
/// # Panics
///
/// Panics if `n` exceeds 65536.
pub fn gen_synthetic(seed: u64, n: usize, profile: Profile) -> Ruleset {
    assert!(n <= MAX_RULES, "at most {MAX_RULES} rules can be generated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(profile.stream());

    // Rules cluster around a handful of networks so prefixes nest and overlap.
    let pool_len = 8 + (n as f64).sqrt() as usize;
    let src_pool: Vec<u32> = (0..pool_len).map(|_| rng.gen()).collect();
    let dst_pool: Vec<u32> = (0..pool_len).map(|_| rng.gen()).collect();

    // The firewall profile gets a fixed share of wildcard sources, shuffled.
    let mut wild_src = vec![false; n];
    if profile == Profile::Fw {
        let k = (n * 2).div_ceil(5);
        wild_src[..k].iter_mut().for_each(|w| *w = true);
        wild_src.shuffle(&mut rng);
    }

    let rules = (0..n)
        .map(|i| {
            let (src, dst, sport, dport, proto) = match profile {
                Profile::Acl => (
                    pick_prefix(&mut rng, &src_pool, 0.15, &[(8, 1), (16, 2), (24, 3), (32, 6)]),
                    pick_prefix(&mut rng, &dst_pool, 0.05, &[(16, 1), (24, 4), (28, 2), (32, 5)]),
                    pick_ports(&mut rng, 0.9, 0.0),
                    pick_ports(&mut rng, 0.2, 0.6),
                    pick_proto(&mut rng, 0.1, &[6, 6, 6, 17, 17]),
                ),
                Profile::Fw => (
                    if wild_src[i] {
                        Prefix::ANY
                    } else {
                        pick_prefix(&mut rng, &src_pool, 0.0, &[(8, 1), (16, 2), (24, 2), (32, 3)])
                    },
                    pick_prefix(&mut rng, &dst_pool, 0.3, &[(8, 1), (16, 2), (24, 2), (32, 3)]),
                    pick_ports(&mut rng, 0.7, 0.05),
                    pick_ports(&mut rng, 0.4, 0.35),
                    pick_proto(&mut rng, 0.3, &[6, 17, 1]),
                ),
                Profile::Ipc => (
                    pick_prefix(&mut rng, &src_pool, 0.1, &[(8, 1), (12, 1), (16, 2), (24, 3), (32, 3)]),
                    pick_prefix(&mut rng, &dst_pool, 0.1, &[(8, 1), (16, 2), (20, 1), (24, 3), (32, 3)]),
                    pick_ports(&mut rng, 0.6, 0.2),
                    pick_ports(&mut rng, 0.4, 0.4),
                    pick_proto(&mut rng, 0.15, &[6, 17, 1, 47]),
                ),
            };
            Rule {
                priority: i as u32,
                id: i as u16,
                src,
                dst,
                sport,
                dport,
                proto,
            }
        })
        .collect();
    Ruleset { rules }
}

/// `lengths` holds `(base length, weight)`; a small jitter is added so prefix
/// lengths are not all byte-aligned.
fn pick_prefix(rng: &mut ChaCha8Rng, pool: &[u32], p_wild: f64, lengths: &[(u8, u32)]) -> Prefix {
    if rng.gen_bool(p_wild) {
        return Prefix::ANY;
    }
    let total: u32 = lengths.iter().map(|(_, w)| w).sum();
    let mut pick = rng.gen_range(0..total);
    let mut len = lengths[0].0;
    for &(l, w) in lengths {
        if pick < w {
            len = l;
            break;
        }
        pick -= w;
    }
    if len < 32 && rng.gen_bool(0.25) {
        len = (len + rng.gen_range(1..=4)).min(32);
    }
    let base = pool[rng.gen_range(0..pool.len())];
    // keep the network's top 12 bits, randomize the rest
    let addr = (base & 0xFFF0_0000) | (rng.gen::<u32>() & 0x000F_FFFF);
    Prefix::new(addr, len).expect("length capped at 32")
}

fn pick_ports(rng: &mut ChaCha8Rng, p_any: f64, p_exact: f64) -> PortRange {
    let roll: f64 = rng.gen();
    if roll < p_any {
        PortRange::ANY
    } else if roll < p_any + p_exact {
        PortRange::exact(*COMMON_PORTS.choose(rng).expect("non-empty"))
    } else {
        match rng.gen_range(0..3) {
            0 => PortRange::new(1024, 65535).expect("ordered"),
            1 => PortRange::new(0, 1023).expect("ordered"),
            _ => {
                let a: u16 = rng.gen();
                let b: u16 = rng.gen();
                PortRange::new(a.min(b), a.max(b)).expect("ordered")
            }
        }
    }
}

fn pick_proto(rng: &mut ChaCha8Rng, p_any: f64, values: &[u8]) -> ProtoSpec {
    if rng.gen_bool(p_any) {
        ProtoSpec::ANY
    } else {
        ProtoSpec::exact(*values.choose(rng).expect("non-empty"))
    }
}
