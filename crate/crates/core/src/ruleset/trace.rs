use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{classify_linear, prefix_mask, PacketHeader, Rule, Ruleset};

/// One packet of a trace. `expected` is `None` when the trace line carries no
/// expectation, `Some(None)` for an expected miss (`-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub header: PacketHeader,
    pub expected: Option<Option<u16>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("trace line {line}: {msg}")]
pub struct TraceError {
    pub line: usize,
    pub msg: String,
}

/// Parses `sip dip sport dport proto [expected]` lines of decimal integers.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEntry>, TraceError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let err = |msg: String| TraceError { line, msg };
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if !(5..=6).contains(&fields.len()) {
            return Err(err(format!("expected 5 or 6 fields, found {}", fields.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} '{s}'"))
        }
        let header = PacketHeader {
            sip: num(fields[0], "source address").map_err(err)?,
            dip: num(fields[1], "destination address").map_err(err)?,
            sport: num(fields[2], "source port").map_err(err)?,
            dport: num(fields[3], "destination port").map_err(err)?,
            proto: num(fields[4], "protocol").map_err(err)?,
        };
        let expected = match fields.get(5) {
            None => None,
            Some(&"-1") => Some(None),
            Some(s) => Some(Some(num::<u16>(s, "expected rule id").map_err(err)?)),
        };
        out.push(TraceEntry { header, expected });
    }
    Ok(out)
}

pub fn format_trace(trace: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in trace {
        let h = &e.header;
        let _ = write!(out, "{} {} {} {} {}", h.sip, h.dip, h.sport, h.dport, h.proto);
        match e.expected {
            None => {}
            Some(None) => out.push_str(" -1"),
            Some(Some(id)) => {
                let _ = write!(out, " {id}");
            }
        }
        out.push('\n');
    }
    out
}

/// Draws `m` headers, each a uniform point inside a uniformly chosen rule, and
/// labels it with the linear-search answer. An empty ruleset yields uniform
/// random headers labelled as misses.
pub fn gen_trace(rs: &Ruleset, seed: u64, m: usize) -> Vec<TraceEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let header = if rs.is_empty() {
                PacketHeader {
                    sip: rng.gen(),
                    dip: rng.gen(),
                    sport: rng.gen(),
                    dport: rng.gen(),
                    proto: rng.gen(),
                }
            } else {
                let r = &rs.rules()[rng.gen_range(0..rs.len())];
                point_in(r, &mut rng)
            };
            TraceEntry {
                header,
                expected: Some(classify_linear(rs, &header)),
            }
        })
        .collect()
}

fn point_in(r: &Rule, rng: &mut impl Rng) -> PacketHeader {
    PacketHeader {
        sip: r.src.addr() | (rng.gen::<u32>() & !prefix_mask(r.src.len())),
        dip: r.dst.addr() | (rng.gen::<u32>() & !prefix_mask(r.dst.len())),
        sport: rng.gen_range(r.sport.lo()..=r.sport.hi()),
        dport: rng.gen_range(r.dport.lo()..=r.dport.hi()),
        proto: if r.proto.is_wildcard() {
            rng.gen()
        } else {
            r.proto.value()
        },
    }
}
