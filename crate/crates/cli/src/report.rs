//! Analysis reports: JSON for machines, one line per finding for people.

use std::fmt::Write as _;

use ceiscan_pdg::{Confidence, Rule};
use serde::{Deserialize, Serialize};

use crate::config::Stages;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingStatus {
    /// Stage I only; never sent to the bytecode stage.
    Warning,
    Confirmed,
    Unreachable,
    /// Removed by the protection-pattern filter.
    Dropped,
    UnknownTimeout,
    UnknownBudget,
}

impl FindingStatus {
    pub fn is_unknown(self) -> bool {
        matches!(self, FindingStatus::UnknownTimeout | FindingStatus::UnknownBudget)
    }

    /// Whether the finding is reported as a possible reentrancy.
    pub fn reported(self) -> bool {
        !matches!(self, FindingStatus::Unreachable | FindingStatus::Dropped)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FindingStatus::Warning => "warning",
            FindingStatus::Confirmed => "confirmed",
            FindingStatus::Unreachable => "unreachable",
            FindingStatus::Dropped => "dropped",
            FindingStatus::UnknownTimeout => "unknown-timeout",
            FindingStatus::UnknownBudget => "unknown-budget",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
    pub end_line: u32,
    pub column: u32,
    pub start: u32,
    pub length: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingTimings {
    pub stage2_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    /// Contract declaring the function that makes the call.
    pub contract: String,
    pub function: String,
    pub entry_points: Vec<String>,
    pub location: Location,
    pub rule: Rule,
    pub confidence: Confidence,
    pub check_lines: Vec<u32>,
    pub effect_line: Option<u32>,
    pub violated: Vec<String>,
    pub path_cap_hit: bool,
    pub status: FindingStatus,
    pub reported: bool,
    pub tags: Vec<String>,
    /// Why the protection-pattern filter removed it.
    pub ppt: Option<String>,
    /// Verdict details from the bytecode stage: witness, path, stats.
    pub stage2: Option<serde_json::Value>,
    pub timings: FindingTimings,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTimings {
    pub compile_ms: u64,
    pub stage1_ms: u64,
    pub stage2_ms: u64,
    pub total_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub path: String,
    pub compiler: Option<String>,
    pub contracts: Vec<String>,
    pub findings: Vec<Finding>,
    pub error: Option<String>,
    pub timings: UnitTimings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub config_fingerprint: String,
    pub stages: Stages,
    pub units: Vec<UnitReport>,
    pub total_ms: u64,
}

impl Report {
    pub fn new(config_fingerprint: String, stages: Stages) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_fingerprint,
            stages,
            units: Vec::new(),
            total_ms: 0,
        }
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> + '_ {
        self.units.iter().flat_map(|u| u.findings.iter())
    }

    /// 2 if any unit failed, 1 if anything was reported, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.units.iter().any(|u| u.error.is_some()) {
            2
        } else if self.findings().any(|f| f.reported) {
            1
        } else {
            0
        }
    }

    /// Copy with every timing field zeroed, for comparing runs.
    pub fn without_timings(&self) -> Report {
        let mut r = self.clone();
        r.total_ms = 0;
        for u in &mut r.units {
            u.timings = UnitTimings::default();
            for f in &mut u.findings {
                f.timings = FindingTimings::default();
            }
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            if let Some(e) = &u.error {
                let _ = writeln!(out, "{}: error: {}", u.path, e.lines().next().unwrap_or(""));
                continue;
            }
            for f in &u.findings {
                let _ = write!(
                    out,
                    "{}:{}:{}: {} {} {}",
                    f.location.file,
                    f.location.line,
                    f.location.column,
                    f.status.as_str(),
                    f.function,
                    serde_plain(&f.rule),
                );
                if !f.tags.is_empty() {
                    let _ = write!(out, " [{}]", f.tags.join(", "));
                }
                if let Some(p) = &f.ppt {
                    let _ = write!(out, " ({p})");
                }
                out.push('\n');
            }
        }
        let reported = self.findings().filter(|f| f.reported).count();
        let total = self.findings().count();
        let errors = self.units.iter().filter(|u| u.error.is_some()).count();
        let _ = writeln!(
            out,
            "{} file(s), {} reported of {} candidate(s), {} error(s), {} ms",
            self.units.len(),
            reported,
            total,
            errors,
            self.total_ms
        );
        out
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}
