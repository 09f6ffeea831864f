use std::fmt::{self, Write as _};
use std::net::Ipv4Addr;

use thiserror::Error;

use super::{PortRange, Prefix, ProtoSpec, Rule, RuleError, Ruleset, MAX_RULES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: protocol mask 0x{mask:02X} is not 0x00 or 0xFF")]
    ProtoMask { line: usize, mask: u8 },
    #[error("line {line}: {source}")]
    Rule { line: usize, source: RuleError },
    #[error("ruleset exceeds {MAX_RULES} rules")]
    TooManyRules,
}

/// Parses ClassBench filter lines. Blank lines and `#` comments are skipped;
/// any fields after the protocol are ignored.
pub fn parse_classbench(text: &str) -> Result<Ruleset, ParseError> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if rules.len() == MAX_RULES {
            return Err(ParseError::TooManyRules);
        }
        let mut rule = parse_line(trimmed, line)?;
        rule.priority = rules.len() as u32;
        rule.id = rules.len() as u16;
        rules.push(rule);
    }
    Ok(Ruleset { rules })
}

fn malformed(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, msg: msg.into() }
}

fn parse_line(text: &str, line: usize) -> Result<Rule, ParseError> {
    let body = text
        .strip_prefix('@')
        .ok_or_else(|| malformed(line, "filter line must start with '@'"))?;
    let mut tokens = Tokens::new(body);

    let src = parse_prefix(tokens.next(line, "source prefix")?, line)?;
    let dst = parse_prefix(tokens.next(line, "destination prefix")?, line)?;
    let sport = parse_range(&mut tokens, line, "source port range")?;
    let dport = parse_range(&mut tokens, line, "destination port range")?;
    let proto = parse_proto(tokens.next(line, "protocol")?, line)?;

    Ok(Rule {
        priority: 0,
        id: 0,
        src,
        dst,
        sport,
        dport,
        proto,
    })
}

/// Whitespace tokens, with `:` split out as its own token so that both
/// `0 : 65535` and `0:65535` parse the same way.
struct Tokens<'a> {
    parts: std::iter::Peekable<Box<dyn Iterator<Item = &'a str> + 'a>>,
}

impl<'a> Tokens<'a> {
    fn new(body: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = &'a str> + 'a> = Box::new(body.split_whitespace().flat_map(split_colon));
        Tokens { parts: it.peekable() }
    }

    fn next(&mut self, line: usize, what: &str) -> Result<&'a str, ParseError> {
        self.parts
            .next()
            .ok_or_else(|| malformed(line, format!("missing {what}")))
    }
}

fn split_colon(tok: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = tok;
    while let Some(pos) = rest.find(':') {
        if pos > 0 {
            out.push(&rest[..pos]);
        }
        out.push(":");
        rest = &rest[pos + 1..];
    }
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

fn parse_prefix(tok: &str, line: usize) -> Result<Prefix, ParseError> {
    let (addr, len) = tok
        .split_once('/')
        .ok_or_else(|| malformed(line, format!("prefix '{tok}' lacks '/len'")))?;
    let addr: Ipv4Addr = addr
        .parse()
        .map_err(|_| malformed(line, format!("bad IPv4 address '{addr}'")))?;
    let len: u8 = len
        .parse()
        .map_err(|_| malformed(line, format!("bad prefix length '{len}'")))?;
    Prefix::new(u32::from(addr), len).map_err(|source| ParseError::Rule { line, source })
}

fn parse_range(tokens: &mut Tokens<'_>, line: usize, what: &str) -> Result<PortRange, ParseError> {
    let lo = parse_port(tokens.next(line, what)?, line)?;
    if tokens.next(line, what)? != ":" {
        return Err(malformed(line, format!("{what} must be 'lo : hi'")));
    }
    let hi = parse_port(tokens.next(line, what)?, line)?;
    PortRange::new(lo, hi).map_err(|source| ParseError::Rule { line, source })
}

fn parse_port(tok: &str, line: usize) -> Result<u16, ParseError> {
    tok.parse().map_err(|_| malformed(line, format!("bad port '{tok}'")))
}

fn parse_hex_byte(tok: &str, line: usize) -> Result<u8, ParseError> {
    let digits = tok
        .strip_prefix("0x")
        .or_else(|| tok.strip_prefix("0X"))
        .ok_or_else(|| malformed(line, format!("expected hex byte, got '{tok}'")))?;
    u8::from_str_radix(digits, 16).map_err(|_| malformed(line, format!("bad hex byte '{tok}'")))
}

fn parse_proto(tok: &str, line: usize) -> Result<ProtoSpec, ParseError> {
    let (value, mask) = tok
        .split_once('/')
        .ok_or_else(|| malformed(line, format!("protocol '{tok}' lacks '/mask'")))?;
    let value = parse_hex_byte(value, line)?;
    match parse_hex_byte(mask, line)? {
        0xFF => Ok(ProtoSpec::exact(value)),
        0x00 => Ok(ProtoSpec::ANY),
        mask => Err(ParseError::ProtoMask { line, mask }),
    }
}

/// Writes one tab-separated ClassBench line per rule, each newline-terminated.
pub fn format_classbench(rs: &Ruleset) -> String {
    let mut out = String::new();
    for r in rs.rules() {
        let _ = writeln!(out, "{r}");
    }
    out
}

/// A single ClassBench line, without the newline.
impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (pv, pm) = if self.proto.is_wildcard() {
            (0, 0)
        } else {
            (self.proto.value(), 0xFF)
        };
        write!(
            f,
            "@{}\t{}\t{} : {}\t{} : {}\t0x{:02X}/0x{:02X}",
            self.src,
            self.dst,
            self.sport.lo(),
            self.sport.hi(),
            self.dport.lo(),
            self.dport.hi(),
            pv,
            pm
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_wildcard_line() {
        let rs = parse_classbench("@0.0.0.0/0 0.0.0.0/0 0 : 65535 0 : 65535 0x00/0x00").unwrap();
        assert_eq!(rs.rules(), &[Rule::wildcard(0)]);
    }

    #[test]
    fn field_by_field() {
        let rs = parse_classbench("@10.0.0.0/8 192.168.1.0/24 0 : 65535 80 : 80 0x06/0xFF").unwrap();
        let r = rs[0];
        assert_eq!(r.src, Prefix::new(0x0a00_0000, 8).unwrap());
        assert_eq!(r.dst, Prefix::new(0xc0a8_0100, 24).unwrap());
        assert_eq!(r.sport, PortRange::ANY);
        assert_eq!(r.dport, PortRange::exact(80));
        assert_eq!(r.proto, ProtoSpec::exact(6));
        assert_eq!(parse_classbench(&format_classbench(&rs)).unwrap(), rs);
    }

    #[test]
    fn partial_proto_mask_rejected() {
        let err = parse_classbench("@10.0.0.0/8 0.0.0.0/0 0 : 65535 0 : 65535 0x06/0x0F");
        assert_eq!(err, Err(ParseError::ProtoMask { line: 1, mask: 0x0F }));
    }

    #[test]
    fn wildcard_proto_value_canonicalized() {
        let rs = parse_classbench("@0.0.0.0/0 0.0.0.0/0 0 : 65535 0 : 65535 0x11/0x00").unwrap();
        assert_eq!(rs[0].proto, ProtoSpec::ANY);
    }

    #[test]
    fn tolerant_whitespace_comments_and_trailing_fields() {
        let text = "# header\n\n@1.2.3.4/32\t5.6.7.0/24\t1024:65535\t53 :53\t0x11/0xFF\t0x0000/0x0200\n";
        let rs = parse_classbench(text).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].sport, PortRange::new(1024, 65535).unwrap());
        assert_eq!(rs[0].dport, PortRange::exact(53));
    }

    #[test]
    fn canonicalizes_host_bits() {
        let rs = parse_classbench("@10.0.0.1/8 0.0.0.0/0 0 : 65535 0 : 65535 0x00/0x00").unwrap();
        assert_eq!(rs[0].src.addr(), 0x0a00_0000);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "@0.0.0.0/0 0.0.0.0/0 0 : 65535 0 : 65535 0x00/0x00\n\n10.0.0.0/8";
        match parse_classbench(text) {
            Err(ParseError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "@0.0.0.0/0 0.0.0.0/0 9 : 3 0 : 65535 0x00/0x00";
        assert!(matches!(parse_classbench(text), Err(ParseError::Rule { line: 1, .. })));
        assert!(parse_classbench("@0.0.0.0/33 0.0.0.0/0 0 : 1 0 : 1 0x00/0x00").is_err());
        assert!(parse_classbench("@0.0.0.0/0 0.0.0.0/0 0 : 1 0 : 1").is_err());
        assert!(parse_classbench("@0.0.0.0/0 0.0.0.0/0 0 - 1 0 : 1 0x00/0x00").is_err());
    }

    #[test]
    fn too_many_rules() {
        let line = "@0.0.0.0/0 0.0.0.0/0 0 : 65535 0 : 65535 0x00/0x00\n";
        let text = line.repeat(MAX_RULES + 1);
        assert_eq!(parse_classbench(&text), Err(ParseError::TooManyRules));
    }

    #[test]
    fn format_empty_and_wildcard() {
        assert_eq!(format_classbench(&Ruleset::empty()), "");
        let rs = Ruleset::from_rules(vec![Rule::wildcard(0)]).unwrap();
        assert_eq!(
            format_classbench(&rs),
            "@0.0.0.0/0\t0.0.0.0/0\t0 : 65535\t0 : 65535\t0x00/0x00\n"
        );
    }
}
