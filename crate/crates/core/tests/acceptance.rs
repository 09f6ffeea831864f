//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::collections::HashSet;
use std::panic;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use pcut_core::engine::{classify, classify_tree, extract_child_index};
use pcut_core::hwsim::{simulate, simulate_costs, sorter_check, AcceleratorConfig, JobCost};
use pcut_core::memlayout::{decode_ip, decode_rule, encode_ip, encode_rule, layout, MemoryImage, RootBlock, RULE_BITS};
use pcut_core::ruleset::{
    classify_linear, gen_synthetic, gen_trace, PacketHeader, PortRange, Prefix, Profile, ProtoSpec, Rule, Ruleset,
};
use pcut_core::treebuild::{
    build, precut, tree_stats, BuildConfig, CutSpec, DimCut, Interval, Node, Region, DIMS, DIM_BITS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("encoding exactness", encoding_exactness),
        ("pre-cutting", precutting),
        ("division-free child index", division_free),
        ("throughput model", throughput),
        ("in-order delivery", in_order_delivery),
        ("heuristic monotonicity", monotonicity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS      {} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL      {} {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("EXCLUDED  8 power draw, logic-element counts and FPGA clock rates: hardware only");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------
// 1 and 7: one sweep over profiles, sizes and toggle combinations

const SIZES: [usize; 10] = [100, 250, 500, 1000, 2000, 3000, 4000, 6000, 8000, 10_000];
const HEADERS: usize = 10_000;

/// Toggle combination `t`: bit 2 merge, bit 1 overlap, bit 0 push.
fn toggles(t: usize) -> (bool, bool, bool) {
    (t & 4 != 0, t & 2 != 0, t & 1 != 0)
}

struct Sweep {
    rulesets: usize,
    builds: usize,
    lookups: usize,
    mismatches: Vec<String>,
    merge_violations: Vec<String>,
    overlap_violations: Vec<String>,
}

fn sweep() -> &'static Result<Sweep, String> {
    static SWEEP: OnceLock<Result<Sweep, String>> = OnceLock::new();
    SWEEP.get_or_init(|| panic::catch_unwind(run_sweep).map_err(|_| "sweep panicked".to_string()))
}

/// Written independently of the library's matcher.
fn oracle(rs: &Ruleset, h: &PacketHeader) -> Option<u16> {
    let prefix = |p: &Prefix, ip: u32| {
        let len = u32::from(p.len());
        len == 0 || (ip ^ p.addr()) >> (32 - len) == 0
    };
    rs.rules()
        .iter()
        .find(|r| {
            prefix(&r.src, h.sip)
                && prefix(&r.dst, h.dip)
                && (r.sport.lo()..=r.sport.hi()).contains(&h.sport)
                && (r.dport.lo()..=r.dport.hi()).contains(&h.dport)
                && (r.proto.is_wildcard() || r.proto.value() == h.proto)
        })
        .map(|r| r.id)
}

fn headers(rs: &Ruleset, seed: u64) -> Vec<PacketHeader> {
    // mostly points inside rules, plus uniform points that often miss
    let mut out: Vec<PacketHeader> = gen_trace(rs, seed, HEADERS * 9 / 10).iter().map(|t| t.header).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    while out.len() < HEADERS {
        out.push(PacketHeader {
            sip: rng.gen(),
            dip: rng.gen(),
            sport: rng.gen(),
            dport: rng.gen(),
            proto: rng.gen(),
        });
    }
    out
}

fn run_sweep() -> Sweep {
    let mut s = Sweep {
        rulesets: 0,
        builds: 0,
        lookups: 0,
        mismatches: Vec::new(),
        merge_violations: Vec::new(),
        overlap_violations: Vec::new(),
    };
    for profile in Profile::ALL {
        for (i, &n) in SIZES.iter().enumerate() {
            let seed = 1000 * profile as u64 + i as u64;
            let rs = gen_synthetic(seed, n, profile);
            let hs = headers(&rs, seed);
            let want: Vec<Option<u16>> = hs.iter().map(|h| oracle(&rs, h)).collect();
            for (h, w) in hs.iter().zip(&want) {
                if classify_linear(&rs, h) != *w {
                    s.mismatches
                        .push(format!("{profile}/{n}: linear search disagrees with oracle on {h:?}"));
                }
            }
            s.rulesets += 1;

            let mut nodes = [0usize; 8];
            let mut stored = [0usize; 8];
            for t in 0..8 {
                let (merge, overlap, push) = toggles(t);
                let cfg = BuildConfig::default().with_heuristics(merge, overlap, push);
                let tree = build(&rs, &cfg).expect("default config is valid");
                let img = layout(&tree).expect("image fits");
                let st = tree_stats(&tree);
                nodes[t] = st.nodes;
                stored[t] = st.stored_rules;
                s.builds += 1;
                let mut bad = 0;
                for (h, w) in hs.iter().zip(&want) {
                    let got = classify(&img, h).expect("valid image").matched;
                    if got != *w || classify_tree(&tree, h).matched != *w {
                        bad += 1;
                    }
                }
                s.lookups += hs.len();
                if bad > 0 {
                    s.mismatches.push(format!(
                        "{profile}/{n} merge={merge} overlap={overlap} push={push}: {bad} mismatches"
                    ));
                }
            }
            for t in 0..8 {
                let (merge, overlap, _) = toggles(t);
                if merge && nodes[t] > nodes[t & !4] {
                    s.merge_violations.push(format!(
                        "{profile}/{n} toggles {t:03b}: {} nodes merged vs {} unmerged",
                        nodes[t],
                        nodes[t & !4]
                    ));
                }
                if overlap && stored[t] > stored[t & !2] {
                    s.overlap_violations.push(format!(
                        "{profile}/{n} toggles {t:03b}: {} entries pruned vs {} unpruned",
                        stored[t],
                        stored[t & !2]
                    ));
                }
            }
        }
    }
    s
}

fn first_few(v: &[String]) -> String {
    v.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
}

fn oracle_equivalence() -> Outcome {
    let s = sweep().as_ref()?;
    ensure!(s.rulesets >= 30 && s.builds == 8 * s.rulesets, "sweep incomplete");
    ensure!(
        s.mismatches.is_empty(),
        "{} failures: {}",
        s.mismatches.len(),
        first_few(&s.mismatches)
    );
    Ok(format!(
        "{} rulesets x 8 toggle sets, {} image and tree lookups, 0 mismatches",
        s.rulesets, s.lookups
    ))
}

fn monotonicity() -> Outcome {
    let s = sweep().as_ref()?;
    ensure!(
        s.merge_violations.is_empty(),
        "merging grew the tree: {}",
        first_few(&s.merge_violations)
    );
    ensure!(
        s.overlap_violations.is_empty(),
        "pruning grew storage: {}",
        first_few(&s.overlap_violations)
    );
    ensure!(s.mismatches.is_empty(), "classification changed under some toggle set");
    Ok(format!(
        "{} merge and {} pruning comparisons, results identical across toggles",
        s.rulesets * 4,
        s.rulesets * 4
    ))
}

// ---------------------------------------------------------------------------
// 2

fn random_prefix(rng: &mut impl Rng) -> Prefix {
    Prefix::new(rng.gen(), rng.gen_range(0..=32)).unwrap()
}

fn random_rule(rng: &mut impl Rng) -> Rule {
    let ports = |rng: &mut ChaCha8Rng| {
        let (a, b) = (rng.gen::<u16>(), rng.gen::<u16>());
        PortRange::new(a.min(b), a.max(b)).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let id = rng.gen();
    Rule {
        priority: u32::from(id),
        id,
        src: random_prefix(&mut rng),
        dst: random_prefix(&mut rng),
        sport: ports(&mut rng),
        dport: ports(&mut rng),
        proto: if rng.gen_bool(0.3) {
            ProtoSpec::ANY
        } else {
            ProtoSpec::exact(rng.gen())
        },
    }
}

fn encoding_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut seen = HashSet::new();
    let mut prefixes = HashSet::new();
    for len in 0..=32u8 {
        for _ in 0..1000 {
            let p = Prefix::new(rng.gen(), len).unwrap();
            let e = encode_ip(p);
            ensure!(e.bits() >> 35 == 0, "{p} encodes wider than 35 bits");
            ensure!(decode_ip(e) == Ok(p), "{p} does not round-trip");
            // distinct prefixes must get distinct codes
            if prefixes.insert(p) {
                ensure!(seen.insert(e.bits()), "{p} shares a code with another prefix");
            }
        }
    }
    ensure!(RULE_BITS == 160, "rule word is {RULE_BITS} bits");
    for _ in 0..10_000 {
        let r = random_rule(&mut rng);
        let last = rng.gen();
        let w = encode_rule(&r, last);
        ensure!(w.limbs()[2] >> 32 == 0, "rule {} sets bits beyond 160", r.id);
        ensure!(decode_rule(&w) == Ok((r, last)), "rule {r:?} does not round-trip");
    }
    Ok(format!(
        "33 lengths x 1000 addresses ({} distinct prefixes, injective); 10000 rules in 160 bits",
        prefixes.len()
    ))
}

// ---------------------------------------------------------------------------
// 3

fn src_dst_rule(id: u16, src: (u32, u8), dst: (u32, u8)) -> Rule {
    Rule {
        src: Prefix::new(src.0, src.1).unwrap(),
        dst: Prefix::new(dst.0, dst.1).unwrap(),
        ..Rule::wildcard(id)
    }
}

fn precutting() -> Outcome {
    let u = Region::universe();
    let two = [
        src_dst_rule(0, (0, 2), (0, 0)),
        src_dst_rule(1, (0x2000_0000, 3), (0, 0)),
    ];
    let p = precut(&u, &two);
    ensure!(p.counts == [2, 0, 0, 0, 0], "two-rule example gave {:?}", p.counts);
    ensure!(
        p.region.dims[0] == Interval::new(0, (1 << 30) - 1),
        "source not kept at the lowest quarter"
    );
    ensure!(u.area() == p.region.area() << 2, "area not divided by 4");

    // src confined to the lowest quarter, dst to the lower half
    let rules = [
        src_dst_rule(0, (0, 3), (0, 2)),
        src_dst_rule(1, (0x2000_0000, 3), (0x4000_0000, 2)),
    ];
    let p = precut(&u, &rules);
    let f = false;
    ensure!(
        p.passes == [[true, true, f, f, f], [true, f, f, f, f]],
        "halving passes {:?}",
        p.passes
    );
    let mut step_a = u;
    step_a.dims[0] = Interval::new(0, (1 << 31) - 1);
    step_a.dims[1] = Interval::new(0, (1 << 31) - 1);
    let mut step_b = step_a;
    step_b.dims[0] = Interval::new(0, (1 << 30) - 1);
    ensure!(p.region == step_b, "final region {:?}", p.region);
    let (a0, a1, a2) = (u.area(), step_a.area(), step_b.area());
    ensure!(
        (a0 - a1) * 100 == 75 * a0,
        "first pass removed {}/{} of the area",
        a0 - a1,
        a0
    );
    ensure!(
        (a1 - a2) * 100 == 50 * a1,
        "second pass removed {}/{} of the area",
        a1 - a2,
        a1
    );
    ensure!(
        rules.iter().all(|r| Region::of_rule(r).intersects(&p.region)),
        "a rule was cut away"
    );
    Ok("counts [2,0,0,0,0]; area reduced 75% then a further 50%".into())
}

// ---------------------------------------------------------------------------
// 4

/// Engine traversal functions, checked for division and floating point.
const TRAVERSAL: [(&str, &str); 13] = [
    ("engine", "classify"),
    ("engine", "extract_child_index"),
    ("engine", "entry_position"),
    ("engine", "scan"),
    ("engine", "fetch"),
    ("engine", "finish"),
    ("engine", "min_id"),
    ("encoding", "matches"),
    ("encoding", "ip_matches"),
    ("encoding", "word_rule"),
    ("encoding", "word_entry"),
    ("encoding", "from_word"),
    ("bits", "get_bits"),
];

/// Body of the first `fn name` in `src`, with line comments removed.
fn fn_body(src: &str, name: &str) -> Option<String> {
    let start = src.find(&format!("fn {name}("))?;
    let open = start + src[start..].find('{')?;
    let mut depth = 0;
    for (i, c) in src[open..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let body = &src[open..=open + i];
                    return Some(
                        body.lines()
                            .map(|l| l.split("//").next().unwrap())
                            .collect::<Vec<_>>()
                            .join("\n"),
                    );
                }
            }
            _ => {}
        }
    }
    None
}

fn division_free() -> Outcome {
    let sources = [
        ("engine", include_str!("../src/engine.rs")),
        ("encoding", include_str!("../src/memlayout/encoding.rs")),
        ("bits", include_str!("../src/memlayout/bits.rs")),
    ];
    for (file, name) in TRAVERSAL {
        let src = sources.iter().find(|s| s.0 == file).unwrap().1;
        let body = fn_body(src, name).ok_or_else(|| format!("fn {name} not found in {file}"))?;
        for bad in ["/", "%", "f32", "f64", ".div", ".rem", "checked_div"] {
            ensure!(!body.contains(bad), "fn {name} in {file} contains `{bad}`");
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = 100_000;
    let mut total_bits = 0u64;
    for _ in 0..samples {
        // random bit-aligned region
        let mut region = Region::universe();
        let mut free = [0u8; DIMS];
        for d in 0..DIMS {
            let w = DIM_BITS[d];
            free[d] = rng.gen_range(0..=w);
            let span = (1u64 << free[d]) - 1;
            let lo = (rng.gen::<u64>() & ((1u64 << w) - 1)) & !span;
            region.dims[d] = Interval::new(lo as u32, (lo + span) as u32);
        }
        // random cut within the index budget
        let mut cuts = CutSpec::default();
        let mut budget = rng.gen_range(0..=15u8);
        for d in rng
            .gen::<[bool; DIMS]>()
            .iter()
            .enumerate()
            .filter(|x| *x.1)
            .map(|x| x.0)
        {
            let n = rng.gen_range(0..=free[d].min(budget));
            budget -= n;
            if n > 0 {
                cuts.dims[d] = DimCut {
                    bitpos: free[d] - 1,
                    ncuts: n,
                };
            }
        }
        total_bits += u64::from(cuts.total_bits());
        let fields: Vec<u32> = (0..DIMS)
            .map(|d| region.dims[d].lo | (rng.gen::<u32>() & ((1u64 << free[d]) - 1) as u32))
            .collect();
        let h = PacketHeader {
            sip: fields[0],
            dip: fields[1],
            sport: fields[2] as u16,
            dport: fields[3] as u16,
            proto: fields[4] as u8,
        };

        // brute force: scan every slice of every cut dimension for the one
        // holding the header, then number children sip-major
        let mut want = 0usize;
        for d in 0..DIMS {
            let n = cuts.dims[d].ncuts;
            if n == 0 {
                continue;
            }
            let width = 1u64 << (free[d] - n);
            let lo = u64::from(region.dims[d].lo);
            let v = u64::from(fields[d]);
            let hits: Vec<usize> = (0..1usize << n)
                .filter(|&j| (lo + j as u64 * width..lo + (j as u64 + 1) * width).contains(&v))
                .collect();
            ensure!(hits.len() == 1, "header in {} slices of dimension {d}", hits.len());
            want = (want << n) | hits[0];
        }
        let got = extract_child_index(&h, &cuts);
        ensure!(
            got == want,
            "index {got}, oracle {want} for {h:?} under {cuts:?} in {region:?}"
        );
        ensure!(
            cuts.child_region(&region, got).contains(&h),
            "child region misses the header"
        );
    }
    Ok(format!(
        "{samples} samples agree (mean {:.1} index bits); {} traversal functions free of division and floats",
        total_bits as f64 / samples as f64,
        TRAVERSAL.len()
    ))
}

// ---------------------------------------------------------------------------
// 5

/// Root cut on the top three source bits; every leaf holds two rules in one word.
fn root_and_two_rule_leaves() -> (Ruleset, MemoryImage, BuildConfig) {
    let rules: Vec<Rule> = (0..8u16)
        .map(|i| src_dst_rule(i, (u32::from(i / 2) << 30, 2), (u32::from(i % 2) << 31, 1)))
        .collect();
    let rs = Ruleset::from_rules(rules).unwrap();
    let cfg = BuildConfig {
        binth: 2,
        ..BuildConfig::default()
    };
    let tree = build(&rs, &cfg).unwrap();
    (rs, layout(&tree).unwrap(), cfg)
}

fn throughput() -> Outcome {
    let (rs, img, cfg) = root_and_two_rule_leaves();
    let tree = build(&rs, &cfg).unwrap();
    let root = tree.node(tree.root());
    let Node::Internal { children, pushed, .. } = root else {
        return Err("root is not internal".into());
    };
    ensure!(pushed.is_empty(), "root holds pushed rules");
    for c in children {
        ensure!(
            matches!(tree.node(*c), Node::Leaf { rules, .. } if rules.len() == 2),
            "child {c:?} is not a two-rule leaf"
        );
    }
    ensure!(
        matches!(img.root(), RootBlock::Internal(_)),
        "image root is not internal"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trace: Vec<PacketHeader> = (0..10_000)
        .map(|_| PacketHeader {
            sip: rng.gen(),
            dip: rng.gen(),
            sport: rng.gen(),
            dport: rng.gen(),
            proto: rng.gen(),
        })
        .collect();

    let one = AcceleratorConfig {
        engines: 1,
        ..AcceleratorConfig::default()
    };
    let run = simulate(&img, &trace, &one).map_err(|e| e.to_string())?;
    for (r, h) in run.results.iter().zip(&trace) {
        ensure!(r.matched == oracle(&rs, h), "wrong result for {h:?}");
        ensure!((r.tree_accesses, r.leaf_accesses) == (1, 1), "packet costs {r:?}");
    }
    let s1 = run.stats;
    ensure!(
        s1.packets_per_cycle == 0.5,
        "one engine: {} packets per cycle",
        s1.packets_per_cycle
    );
    ensure!(s1.fill_cycles <= 8.0, "one engine: fill {} cycles", s1.fill_cycles);

    let four = AcceleratorConfig {
        engines: 4,
        clock_mhz: 110.0,
        ..AcceleratorConfig::default()
    };
    let s4 = simulate(&img, &trace, &four).map_err(|e| e.to_string())?.stats;
    ensure!(s4.mpps == 220.0, "four engines: {} Mpps", s4.mpps);
    ensure!(
        s4.packets_per_cycle == 2.0,
        "four engines: {} packets per cycle",
        s4.packets_per_cycle
    );
    ensure!(s4.fill_cycles <= 8.0, "four engines: fill {} cycles", s4.fill_cycles);
    Ok(format!(
        "1 engine {} packets/cycle (fill {}), 4 engines @110 MHz {} Mpps (fill {}), {} packets",
        s1.packets_per_cycle,
        s1.fill_cycles,
        s4.mpps,
        s4.fill_cycles,
        trace.len()
    ))
}

// ---------------------------------------------------------------------------
// 6

/// Completion orders with at most `depth` packets outstanding. Each family
/// stresses the reorder window differently.
fn adversarial(rng: &mut ChaCha8Rng, n: usize, depth: usize, family: usize) -> Vec<usize> {
    if family == 0 {
        // full windows completed newest first
        return (0..n)
            .step_by(depth)
            .flat_map(|base| (base..(base + depth).min(n)).rev())
            .collect();
    }
    let mut out = Vec::with_capacity(n);
    let mut pending: Vec<usize> = Vec::new();
    let (mut next, mut released) = (0, 0);
    let mut done = vec![false; n];
    while out.len() < n {
        while next < n && next < released + depth {
            pending.push(next);
            next += 1;
        }
        let k = pending.len();
        let pick = match family {
            // the oldest is overtaken by everything behind it
            1 => usize::from(k > 1),
            // mostly the newest few, sometimes anything
            _ if rng.gen_bool(0.7) => k - 1 - rng.gen_range(0..k.min(3)),
            _ => rng.gen_range(0..k),
        };
        let a = pending.remove(pick);
        done[a] = true;
        out.push(a);
        while released < n && done[released] {
            released += 1;
        }
    }
    out
}

/// Largest number of packets arrived but not yet released, assuming a packet
/// is released as soon as it and all older ones have completed.
fn max_outstanding(order: &[usize]) -> usize {
    let mut done = vec![false; order.len()];
    let (mut emitted, mut peak) = (0, 0);
    let mut highest = 0;
    for &a in order {
        highest = highest.max(a + 1);
        peak = peak.max(highest - emitted);
        done[a] = true;
        while emitted < order.len() && done[emitted] {
            emitted += 1;
        }
    }
    peak
}

fn in_order_delivery() -> Outcome {
    let depth = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut peak = 0;
    for k in 0..1000 {
        let n = rng.gen_range(1..=400);
        let order = adversarial(&mut rng, n, depth, k % 3);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        ensure!(
            sorted == (0..n).collect::<Vec<_>>(),
            "generator produced a non-permutation"
        );
        let outstanding = max_outstanding(&order);
        ensure!(outstanding <= depth, "generator exceeded the window: {outstanding}");
        peak = peak.max(outstanding);
        match sorter_check(&order, depth) {
            Ok(emitted) if emitted == (0..n).collect::<Vec<_>>() => {}
            _ => violations += 1,
        }
    }
    ensure!(
        violations == 0,
        "{violations} of 1000 permutations emitted out of order"
    );
    ensure!(peak == depth, "adversaries never filled the window (peak {peak})");

    // the cycle model under wildly uneven costs
    let costs: Vec<JobCost> = (0..20_000)
        .map(|_| JobCost {
            tt: rng.gen_range(0..40),
            lns: if rng.gen_bool(0.2) {
                rng.gen_range(0..200)
            } else {
                rng.gen_range(0..3)
            },
        })
        .collect();
    let cfg = AcceleratorConfig::default();
    let (timings, stats) = simulate_costs(&costs, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        stats.max_in_flight <= depth,
        "{} packets in flight",
        stats.max_in_flight
    );
    for w in timings.windows(2) {
        ensure!(
            w[0].emitted <= w[1].emitted,
            "packet {} emitted before {}",
            w[1].arrival,
            w[0].arrival
        );
    }
    ensure!(
        timings.iter().all(|t| t.completed <= t.emitted),
        "emitted before completion"
    );
    Ok(format!(
        "1000 permutations with up to {depth} outstanding, 0 violations; cycle model in order over {} packets",
        costs.len()
    ))
}
