use std::fmt;

use serde::Serialize;

/// Version tag of every JSON report.
pub const SCHEMA: &str = "pcut.run/1";

#[derive(Serialize)]
pub struct RunReport<'a, C: Serialize, R: Serialize> {
    pub schema: &'static str,
    pub command: &'static str,
    pub argv: &'a [String],
    pub config: &'a C,
    pub result: &'a R,
    /// Wall-clock time of tree build plus layout.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub build_ms: Option<f64>,
}

impl<'a, C: Serialize, R: Serialize> RunReport<'a, C, R> {
    pub fn new(command: &'static str, argv: &'a [String], config: &'a C, result: &'a R, build_ms: Option<f64>) -> Self {
        RunReport {
            schema: SCHEMA,
            command,
            argv,
            config,
            result,
            build_ms,
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Io(String),
    Parse(String),
    Usage(String),
    Capacity(String),
    Structural(String),
    Mismatch(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Parse(_) | Failure::Usage(_) => 2,
            Failure::Capacity(_) => 3,
            Failure::Structural(_) => 4,
            Failure::Mismatch(_) => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Failure::Io(m) => ("i/o error", m),
            Failure::Parse(m) => ("parse error", m),
            Failure::Usage(m) => ("invalid option", m),
            Failure::Capacity(m) => ("capacity exceeded", m),
            Failure::Structural(m) => ("structural error", m),
            Failure::Mismatch(m) => ("verification failed", m),
        };
        write!(f, "{kind}: {msg}")
    }
}
