//! Cycle model of the accelerator: a FIFO packet buffer, parallel
//! classification engines and the in-order sorter.
//!
//! Each engine holds at most two packets, one in its tree traverser (TT) and
//! one in its leaf node searcher (LNS), and makes one memory access per
//! engine cycle. Engines run on staggered memory phases, so they never
//! contend. Within an engine the LNS gets the port first; a TT packet whose
//! descent needs no memory still spends one cycle in the stage.

mod sorter;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{classify, EngineError, MatchResult};
use crate::memlayout::MemoryImage;
use crate::ruleset::PacketHeader;

pub use sorter::{sorter_check, Sorter, SorterError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub engines: usize,
    pub reorder_depth: usize,
    pub clock_mhz: f64,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        AcceleratorConfig {
            engines: 4,
            reorder_depth: 16,
            clock_mhz: 110.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimConfigError {
    #[error("at least one engine is required")]
    NoEngines,
    #[error("reorder depth {depth} is below the engine count {engines}")]
    Depth { depth: usize, engines: usize },
    #[error("clock must be positive and finite")]
    Clock,
}

impl AcceleratorConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.engines == 0 {
            return Err(SimConfigError::NoEngines);
        }
        if self.reorder_depth < self.engines {
            return Err(SimConfigError::Depth {
                depth: self.reorder_depth,
                engines: self.engines,
            });
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(SimConfigError::Clock);
        }
        Ok(())
    }

    /// Width of a packet tag.
    pub fn tag_bits(&self) -> u32 {
        usize::BITS - self.reorder_depth.saturating_sub(1).leading_zeros()
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] SimConfigError),
    #[error("packet {index}: {source}")]
    Image { index: usize, source: EngineError },
}

/// A header as handed from the packet buffer to an engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketJob {
    pub tag: u16,
    pub arrival: usize,
    pub header: PacketHeader,
}

/// Memory accesses one packet needs in each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCost {
    pub tt: u32,
    pub lns: u32,
}

impl From<&MatchResult> for JobCost {
    fn from(r: &MatchResult) -> Self {
        JobCost {
            tt: r.tree_accesses,
            lns: r.leaf_accesses,
        }
    }
}

/// Timing of one packet. Cycles are engine cycles counted from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketTiming {
    pub arrival: usize,
    pub tag: u16,
    pub engine: usize,
    pub dispatched: u64,
    pub completed: u64,
    pub emitted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub total_cycles: u64,
    pub packets: u64,
    pub memory_accesses: u64,
    /// Per engine, the fraction of cycles holding at least one packet.
    pub engine_busy: Vec<f64>,
    /// Steady-state rate: packets emitted after the first emission cycle
    /// over the cycles between first and last emission.
    pub packets_per_cycle: f64,
    /// `packets / total_cycles`, fill and drain included.
    pub mean_packets_per_cycle: f64,
    pub mpps: f64,
    /// `total_cycles - packets / packets_per_cycle`.
    pub fill_cycles: f64,
    pub max_in_flight: usize,
}

/// Output of a run: per-packet results and timings in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub results: Vec<MatchResult>,
    pub timings: Vec<PacketTiming>,
    pub stats: SimStats,
}

/// Classifies `trace` over `image` and times it on the accelerator model.
pub fn simulate(image: &MemoryImage, trace: &[PacketHeader], cfg: &AcceleratorConfig) -> Result<SimRun, SimError> {
    cfg.validate()?;
    let results = trace
        .iter()
        .enumerate()
        .map(|(index, h)| classify(image, h).map_err(|source| SimError::Image { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let costs: Vec<JobCost> = results.iter().map(JobCost::from).collect();
    let (timings, stats) = simulate_costs(&costs, cfg)?;
    Ok(SimRun {
        results,
        timings,
        stats,
    })
}

struct Tt {
    job: usize,
    left: u32,
    stepped: bool,
}

struct Lns {
    job: usize,
    left: u32,
}

#[derive(Default)]
struct Engine {
    tt: Option<Tt>,
    lns: Option<Lns>,
    busy: u64,
}

/// Runs the cycle loop over per-packet access counts.
pub fn simulate_costs(
    costs: &[JobCost],
    cfg: &AcceleratorConfig,
) -> Result<(Vec<PacketTiming>, SimStats), SimConfigError> {
    cfg.validate()?;
    let n = costs.len();
    let depth = cfg.reorder_depth;
    let mut engines: Vec<Engine> = (0..cfg.engines).map(|_| Engine::default()).collect();
    let mut sorter: Sorter<usize> = Sorter::new(depth);
    let mut timings: Vec<PacketTiming> = (0..n)
        .map(|a| PacketTiming {
            arrival: a,
            tag: (a % depth) as u16,
            engine: 0,
            dispatched: 0,
            completed: 0,
            emitted: 0,
        })
        .collect();
    let (mut next, mut emitted, mut in_flight, mut max_in_flight) = (0usize, 0usize, 0usize, 0usize);
    let mut accesses = 0u64;
    let mut cycle = 0u64;
    let mut emit_cycles: Vec<u64> = Vec::with_capacity(n);

    while emitted < n {
        for (e, eng) in engines.iter_mut().enumerate() {
            if eng.tt.is_none() && next < n && in_flight < depth {
                eng.tt = Some(Tt {
                    job: next,
                    left: costs[next].tt,
                    stepped: false,
                });
                timings[next].engine = e;
                timings[next].dispatched = cycle;
                next += 1;
                in_flight += 1;
            }
        }
        max_in_flight = max_in_flight.max(in_flight);

        let mut done: Vec<usize> = Vec::new();
        for eng in engines.iter_mut() {
            if eng.tt.is_some() || eng.lns.is_some() {
                eng.busy += 1;
            }
            let mut port_used = false;
            if let Some(l) = eng.lns.as_mut() {
                l.left -= 1;
                port_used = true;
                accesses += 1;
            }
            if let Some(t) = eng.tt.as_mut() {
                if t.left == 0 {
                    t.stepped = true;
                } else if !port_used {
                    t.left -= 1;
                    t.stepped = true;
                    accesses += 1;
                }
            }

            if eng.lns.as_ref().is_some_and(|l| l.left == 0) {
                done.push(eng.lns.take().expect("checked").job);
            }
            if let Some(t) = eng.tt.as_ref().filter(|t| t.stepped && t.left == 0) {
                let job = t.job;
                if costs[job].lns == 0 {
                    done.push(job);
                    eng.tt = None;
                } else if eng.lns.is_none() {
                    eng.lns = Some(Lns {
                        job,
                        left: costs[job].lns,
                    });
                    eng.tt = None;
                }
            }
        }
        for job in done {
            timings[job].completed = cycle;
            sorter.complete(job % depth, job);
        }
        for job in sorter.drain() {
            debug_assert_eq!(job, emitted);
            timings[job].emitted = cycle;
            emit_cycles.push(cycle);
            emitted += 1;
            in_flight -= 1;
        }
        cycle += 1;
    }

    let total_cycles = cycle;
    let packets_per_cycle = steady_rate(&emit_cycles, total_cycles);
    let stats = SimStats {
        total_cycles,
        packets: n as u64,
        memory_accesses: accesses,
        engine_busy: engines
            .iter()
            .map(|e| {
                if total_cycles == 0 {
                    0.0
                } else {
                    e.busy as f64 / total_cycles as f64
                }
            })
            .collect(),
        packets_per_cycle,
        mean_packets_per_cycle: if total_cycles == 0 {
            0.0
        } else {
            n as f64 / total_cycles as f64
        },
        mpps: packets_per_cycle * cfg.clock_mhz,
        fill_cycles: if n == 0 {
            0.0
        } else {
            total_cycles as f64 - n as f64 / packets_per_cycle
        },
        max_in_flight,
    };
    Ok((timings, stats))
}

fn steady_rate(emit_cycles: &[u64], total_cycles: u64) -> f64 {
    let (Some(&first), Some(&last)) = (emit_cycles.first(), emit_cycles.last()) else {
        return 0.0;
    };
    if last == first {
        return emit_cycles.len() as f64 / total_cycles as f64;
    }
    let after_first = emit_cycles.iter().filter(|&&c| c > first).count();
    after_first as f64 / (last - first) as f64
}
