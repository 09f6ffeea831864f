//! `pcut`: build images, classify traces, simulate the accelerator and
//! generate synthetic inputs.
//!
//! Exit codes: 0 ok, 1 I/O, 2 parse or usage, 3 capacity, 4 structural,
//! 5 verification mismatch.

mod report;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pcut_core::engine::{classify, MatchResult};
use pcut_core::hwsim::{simulate, AcceleratorConfig};
use pcut_core::memlayout::{layout, load_image, memory_report, store_image, ImageError, MemoryImage};
use pcut_core::ruleset::{
    classify_linear, format_classbench, format_trace, gen_synthetic, gen_trace, parse_classbench, parse_trace, Profile,
    Ruleset, TraceEntry,
};
use pcut_core::treebuild::{build, tree_stats, BuildConfig};

use report::{Failure, RunReport};

#[derive(Parser)]
#[command(name = "pcut", version, about = "Pre-cutting decision-tree packet classifier")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a memory image from a ClassBench ruleset.
    Build(BuildArgs),
    /// Classify a trace over an image.
    Classify(ClassifyArgs),
    /// Time a trace on the accelerator model.
    Sim(SimArgs),
    /// Write a synthetic ruleset and, optionally, a trace.
    Gen(GenArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = BuildConfig::default().binth)]
    binth: usize,
    #[arg(long, default_value_t = BuildConfig::default().spfac)]
    spfac: f64,
    #[arg(long = "index-bits", default_value_t = BuildConfig::default().index_bit_cap)]
    index_bits: u8,
    #[arg(long)]
    no_merge: bool,
    #[arg(long)]
    no_overlap: bool,
    #[arg(long)]
    no_push: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Check against expected ids in the trace and, with --rules, against
    /// linear search.
    #[arg(long)]
    verify: bool,
    /// Ruleset the image was built from, for linear-search verification.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Write the match list here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = AcceleratorConfig::default().engines)]
    engines: usize,
    #[arg(long = "clock-mhz", default_value_t = AcceleratorConfig::default().clock_mhz)]
    clock_mhz: f64,
    #[arg(long, default_value_t = AcceleratorConfig::default().reorder_depth)]
    reorder: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Number of rules.
    #[arg(long)]
    rules: usize,
    #[arg(long)]
    profile: Profile,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also generate a trace of this many headers.
    #[arg(long)]
    trace: Option<usize>,
    /// Trace path; defaults to the ruleset path with a `.trace` suffix.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let res = match cli.cmd {
        Command::Build(a) => cmd_build(a, &argv),
        Command::Classify(a) => cmd_classify(a, &argv),
        Command::Sim(a) => cmd_sim(a, &argv),
        Command::Gen(a) => cmd_gen(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pcut: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, data: &[u8]) -> Result<(), Failure> {
    fs::write(path, data).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn read_rules(path: &Path) -> Result<Ruleset, Failure> {
    parse_classbench(&read(path)?).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn read_trace(path: &Path) -> Result<Vec<TraceEntry>, Failure> {
    parse_trace(&read(path)?).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn read_image(path: &Path) -> Result<MemoryImage, Failure> {
    let f = fs::File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    load_image(std::io::BufReader::new(f)).map_err(|e| match e {
        ImageError::Io(e) => Failure::Io(format!("{}: {e}", path.display())),
        e => Failure::Structural(format!("{}: {e}", path.display())),
    })
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    emit(&(serde_json::to_string_pretty(v).expect("report serializes") + "\n"))
}

macro_rules! put {
    ($buf:expr, $($arg:tt)*) => {
        writeln!($buf, $($arg)*).expect("writing to a String")
    };
}

#[derive(Serialize)]
struct BuildResult {
    rules: usize,
    tree: pcut_core::treebuild::TreeStats,
    memory: pcut_core::memlayout::MemoryReport,
}

fn cmd_build(a: BuildArgs, argv: &[String]) -> Result<(), Failure> {
    let cfg = BuildConfig {
        binth: a.binth,
        spfac: a.spfac,
        index_bit_cap: a.index_bits,
        ..BuildConfig::default()
    }
    .with_heuristics(!a.no_merge, !a.no_overlap, !a.no_push);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let rs = read_rules(&a.rules)?;

    let start = Instant::now();
    let tree = build(&rs, &cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let img = layout(&tree).map_err(|e| Failure::Capacity(e.to_string()))?;
    let build_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut bytes = Vec::new();
    store_image(&img, &mut bytes).expect("writing to memory");
    write(&a.out, &bytes)?;

    let result = BuildResult {
        rules: rs.len(),
        tree: tree_stats(&tree),
        memory: memory_report(&img),
    };
    if a.json {
        emit_json(&RunReport::new("build", argv, &cfg, &result, Some(build_ms)))?;
    } else {
        let (t, m) = (&result.tree, &result.memory);
        let mut o = String::new();
        put!(o, "rules            {}", result.rules);
        put!(
            o,
            "nodes            {} ({} internal, {} leaf, {} empty)",
            t.nodes,
            t.internal_nodes,
            t.leaf_nodes,
            t.empty_nodes
        );
        put!(o, "oversized leaves {}", t.oversized_leaves);
        put!(o, "depth            max {}, mean {:.2}", t.max_depth, t.mean_depth);
        put!(
            o,
            "stored rules     {} (replication {:.3}, pushed {})",
            t.stored_rules,
            t.replication,
            t.pushed_rules
        );
        put!(
            o,
            "memory           {} words, {} bytes (header {}, child {}, leaf {}, pushed {})",
            m.words,
            m.bytes,
            m.header_words,
            m.child_entry_words,
            m.leaf_words,
            m.pushed_words
        );
        put!(o, "build time       {build_ms:.1} ms");
        emit(&o)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Mismatch {
    index: usize,
    got: Option<u16>,
    expected: Option<u16>,
    source: &'static str,
}

#[derive(Serialize)]
struct ClassifyResult {
    packets: usize,
    matched: usize,
    verified: bool,
    mean_memory_accesses: f64,
    max_memory_accesses: u32,
    matches: Vec<Option<u16>>,
    mismatches: Vec<Mismatch>,
}

fn cmd_classify(a: ClassifyArgs, argv: &[String]) -> Result<(), Failure> {
    let img = read_image(&a.image)?;
    let trace = read_trace(&a.trace)?;
    let rules = a.rules.as_deref().map(read_rules).transpose()?;
    if let Some(rs) = &rules {
        if rs.len() as u64 != u64::from(img.rule_count()) {
            return Err(Failure::Mismatch(format!(
                "ruleset has {} rules, image was built from {}",
                rs.len(),
                img.rule_count()
            )));
        }
    }

    let results: Vec<MatchResult> = trace
        .iter()
        .enumerate()
        .map(|(i, e)| classify(&img, &e.header).map_err(|err| Failure::Structural(format!("packet {i}: {err}"))))
        .collect::<Result<_, _>>()?;

    let mut mismatches = Vec::new();
    if a.verify {
        for (i, (e, r)) in trace.iter().zip(&results).enumerate() {
            if let Some(exp) = e.expected {
                if exp != r.matched {
                    mismatches.push(Mismatch {
                        index: i,
                        got: r.matched,
                        expected: exp,
                        source: "trace",
                    });
                }
            }
            if let Some(rs) = &rules {
                let exp = classify_linear(rs, &e.header);
                if exp != r.matched {
                    mismatches.push(Mismatch {
                        index: i,
                        got: r.matched,
                        expected: exp,
                        source: "linear",
                    });
                }
            }
        }
    }

    let accesses: u64 = results.iter().map(|r| u64::from(r.memory_accesses)).sum();
    let result = ClassifyResult {
        packets: results.len(),
        matched: results.iter().filter(|r| r.matched.is_some()).count(),
        verified: a.verify && mismatches.is_empty(),
        mean_memory_accesses: if results.is_empty() {
            0.0
        } else {
            accesses as f64 / results.len() as f64
        },
        max_memory_accesses: results.iter().map(|r| r.memory_accesses).max().unwrap_or(0),
        matches: results.iter().map(|r| r.matched).collect(),
        mismatches,
    };

    if a.json {
        let config = serde_json::json!({ "verify": a.verify, "linear_oracle": rules.is_some() });
        emit_json(&RunReport::new("classify", argv, &config, &result, None))?;
    } else {
        let mut lines = String::with_capacity(results.len() * 8);
        for (i, m) in result.matches.iter().enumerate() {
            match m {
                Some(id) => put!(lines, "{i}\t{id}"),
                None => put!(lines, "{i}\t-"),
            }
        }
        match &a.out {
            Some(p) => write(p, lines.as_bytes())?,
            None => emit(&lines)?,
        }
    }
    if let Some(m) = result.mismatches.first() {
        let show = |v: Option<u16>| v.map_or("-".to_string(), |id| id.to_string());
        return Err(Failure::Mismatch(format!(
            "{} mismatches; first at packet {}: got {}, {} says {}",
            result.mismatches.len(),
            m.index,
            show(m.got),
            m.source,
            show(m.expected)
        )));
    }
    if a.verify {
        eprintln!("verified {} packets", result.packets);
    }
    Ok(())
}

fn cmd_sim(a: SimArgs, argv: &[String]) -> Result<(), Failure> {
    let cfg = AcceleratorConfig {
        engines: a.engines,
        reorder_depth: a.reorder,
        clock_mhz: a.clock_mhz,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let img = read_image(&a.image)?;
    let trace: Vec<_> = read_trace(&a.trace)?.iter().map(|e| e.header).collect();
    let run = simulate(&img, &trace, &cfg).map_err(|e| Failure::Structural(e.to_string()))?;
    let s = &run.stats;
    if a.json {
        emit_json(&RunReport::new("sim", argv, &cfg, s, None))?;
    } else {
        let mut o = String::new();
        put!(o, "packets          {}", s.packets);
        put!(o, "cycles           {}", s.total_cycles);
        put!(o, "memory accesses  {}", s.memory_accesses);
        put!(
            o,
            "packets/cycle    {} (mean {:.4})",
            s.packets_per_cycle,
            s.mean_packets_per_cycle
        );
        put!(o, "mpps             {}", s.mpps);
        put!(o, "fill cycles      {}", s.fill_cycles);
        put!(o, "max in flight    {}", s.max_in_flight);
        let busy: Vec<String> = s.engine_busy.iter().map(|b| format!("{b:.3}")).collect();
        put!(o, "engine busy      {}", busy.join(" "));
        emit(&o)?;
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let rs = gen_synthetic(a.seed, a.rules, a.profile);
    write(&a.out, format_classbench(&rs).as_bytes())?;
    if let Some(m) = a.trace {
        let path = a.trace_out.unwrap_or_else(|| {
            let mut p = a.out.clone().into_os_string();
            p.push(".trace");
            p.into()
        });
        write(&path, format_trace(&gen_trace(&rs, a.seed, m)).as_bytes())?;
    }
    Ok(())
}
