//! Output formatting shared by every subcommand.

use std::fmt::Write as _;

/// Shortest decimal that parses back to the same `f64`; scientific notation
/// outside `[1e-5, 1e16)` so tiny tails stay readable.
pub fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Run header written as `#` lines at the top of every output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config_digest: String,
    /// Parameters that affect the numbers. Thread and stream counts do not,
    /// and are left out so outputs compare byte for byte.
    pub params: Vec<(&'static str, String)>,
    pub seed: Option<u64>,
}

impl RunRecord {
    pub fn new(command: &'static str, config_digest: String) -> Self {
        RunRecord {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_digest,
            params: Vec::new(),
            seed: None,
        }
    }

    pub fn param(mut self, key: &'static str, value: impl ToString) -> Self {
        self.params.push((key, value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# cbrw {}", self.tool_version);
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config_sha256: {}", self.config_digest);
        for (k, v) in &self.params {
            let _ = writeln!(s, "# param {k}: {v}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed: {seed}");
        }
        s
    }
}

pub fn join_levels(xs: &[i64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
