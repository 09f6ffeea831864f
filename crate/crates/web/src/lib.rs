//! Browser bindings. Each exported call returns a JSON string; the page in
//! `www/` renders it. The same calls run natively through [`Session`].

use pcut_core::engine::{self, MatchResult};
use pcut_core::hwsim::{self, AcceleratorConfig, SimStats};
use pcut_core::memlayout::{layout, memory_report, MemoryImage, MemoryReport};
use pcut_core::ruleset::{classify_linear, gen_synthetic, gen_trace, PacketHeader, Profile, Ruleset};
use pcut_core::treebuild::{build, tree_stats, BuildConfig, TreeStats};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on generated rules; keeps a build under a second in the page.
pub const MAX_DEMO_RULES: usize = 5000;
pub const MAX_DEMO_PACKETS: usize = 50_000;

#[derive(Debug, Serialize)]
pub struct BuildSummary {
    pub rules: usize,
    pub tree: TreeStats,
    pub memory: MemoryReport,
}

#[derive(Debug, Serialize)]
pub struct Lookup {
    pub matched: Option<u16>,
    /// Linear scan over the ruleset, for comparison.
    pub expected: Option<u16>,
    pub rule: Option<String>,
    pub cost: MatchResult,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub engines: usize,
    pub stats: SimStats,
}

/// A generated ruleset with its tree compiled to a memory image.
pub struct Session {
    rules: Ruleset,
    image: MemoryImage,
    summary: BuildSummary,
}

impl Session {
    pub fn generate(profile: &str, n: usize, seed: u64, cfg: &BuildConfig) -> Result<Session, String> {
        let profile: Profile = profile.parse()?;
        if n > MAX_DEMO_RULES {
            return Err(format!("at most {MAX_DEMO_RULES} rules in the demo"));
        }
        let rules = gen_synthetic(seed, n, profile);
        let tree = build(&rules, cfg).map_err(|e| e.to_string())?;
        let image = layout(&tree).map_err(|e| e.to_string())?;
        let summary = BuildSummary {
            rules: rules.len(),
            tree: tree_stats(&tree),
            memory: memory_report(&image),
        };
        Ok(Session { rules, image, summary })
    }

    pub fn summary(&self) -> &BuildSummary {
        &self.summary
    }

    pub fn lookup(&self, h: &PacketHeader) -> Result<Lookup, String> {
        let cost = engine::classify(&self.image, h).map_err(|e| e.to_string())?;
        let rule = cost.matched.and_then(|id| self.rules.get(id)).map(|r| r.to_string());
        Ok(Lookup {
            matched: cost.matched,
            expected: classify_linear(&self.rules, h),
            rule,
            cost,
        })
    }

    /// Simulates one random trace for each engine count in `1..=max_engines`.
    pub fn sweep(
        &self,
        packets: usize,
        seed: u64,
        max_engines: usize,
        clock_mhz: f64,
    ) -> Result<Vec<SweepPoint>, String> {
        if packets > MAX_DEMO_PACKETS {
            return Err(format!("at most {MAX_DEMO_PACKETS} packets in the demo"));
        }
        let trace: Vec<PacketHeader> = gen_trace(&self.rules, seed, packets).iter().map(|t| t.header).collect();
        (1..=max_engines)
            .map(|engines| {
                let cfg = AcceleratorConfig {
                    engines,
                    clock_mhz,
                    ..AcceleratorConfig::default()
                };
                let run = hwsim::simulate(&self.image, &trace, &cfg).map_err(|e| e.to_string())?;
                Ok(SweepPoint {
                    engines,
                    stats: run.stats,
                })
            })
            .collect()
    }
}

fn to_js<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Generates `n` rules and builds the tree and image.
    #[allow(clippy::too_many_arguments)]
    #[wasm_bindgen(constructor)]
    pub fn new(
        profile: &str,
        n: usize,
        seed: u32,
        binth: usize,
        spfac: f64,
        merge: bool,
        overlap: bool,
        push: bool,
    ) -> Result<Demo, JsValue> {
        let cfg = BuildConfig {
            binth,
            spfac,
            ..BuildConfig::default()
        }
        .with_heuristics(merge, overlap, push);
        let session = Session::generate(profile, n, u64::from(seed), &cfg).map_err(js_err)?;
        Ok(Demo { session })
    }

    pub fn summary(&self) -> Result<String, JsValue> {
        to_js(self.session.summary())
    }

    /// Addresses are dotted quads.
    pub fn classify(&self, sip: &str, dip: &str, sport: u16, dport: u16, proto: u8) -> Result<String, JsValue> {
        let h = PacketHeader {
            sip: parse_ip(sip).map_err(js_err)?,
            dip: parse_ip(dip).map_err(js_err)?,
            sport,
            dport,
            proto,
        };
        to_js(&self.session.lookup(&h).map_err(js_err)?)
    }

    pub fn sweep(&self, packets: usize, seed: u32, max_engines: usize, clock_mhz: f64) -> Result<String, JsValue> {
        to_js(
            &self
                .session
                .sweep(packets, u64::from(seed), max_engines, clock_mhz)
                .map_err(js_err)?,
        )
    }
}

pub fn parse_ip(s: &str) -> Result<u32, String> {
    s.trim()
        .parse::<std::net::Ipv4Addr>()
        .map(u32::from)
        .map_err(|_| format!("'{s}' is not an IPv4 address"))
}
