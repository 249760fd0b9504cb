//! Scoring reports against a labelled manifest.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use ceiscan_pdg::Confidence;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Finding, FindingStatus, Report};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("bad manifest {0}: {1}")]
    Manifest(PathBuf, toml::de::Error),
    #[error("bad report {0}: {1}")]
    Report(PathBuf, serde_json::Error),
    #[error("unknown granularity `{0}` (expected function or line)")]
    Granularity(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Positive {
    /// `Contract.function` containing the vulnerable call.
    pub function: String,
    /// First and last line of the vulnerable statement, inclusive.
    pub lines: [u32; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledContract {
    /// Relative to the manifest's directory.
    pub path: String,
    pub name: String,
    pub compiler: String,
    #[serde(default)]
    pub positives: Vec<Positive>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, rename = "contract")]
    pub contracts: Vec<LabeledContract>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScoreError::Read(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| ScoreError::Manifest(path.to_path_buf(), e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// A finding in the labelled function, or reached through it, matches.
    #[default]
    Function,
    /// The finding's statement must overlap the labelled lines.
    Line,
}

impl FromStr for Granularity {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "function" => Ok(Granularity::Function),
            "line" => Ok(Granularity::Line),
            _ => Err(ScoreError::Granularity(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub granularity: Granularity,
    /// Count every reported finding, not only confirmed and high-confidence ones.
    pub include_all: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Percentages; absent when the denominator is zero.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Counted findings on contracts missing from the manifest.
    pub unlabeled: usize,
    /// Counted findings that are gas-limited or unknown.
    pub tagged: usize,
}

impl ScoreCard {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        ScoreCard {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            unlabeled: 0,
            tagged: 0,
        }
    }
}

impl fmt::Display for ScoreCard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        write!(
            f,
            "tp={} fp={} fn={} tn={} precision={} recall={} f1={}",
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            pct(self.precision),
            pct(self.recall),
            pct(self.f1)
        )?;
        if self.unlabeled > 0 || self.tagged > 0 {
            write!(f, " (unlabeled={} tagged={})", self.unlabeled, self.tagged)?;
        }
        Ok(())
    }
}

/// Whether a finding takes part in scoring.
pub fn counted(f: &Finding, include_all: bool) -> bool {
    f.reported && (include_all || f.status == FindingStatus::Confirmed || f.confidence == Confidence::High)
}

fn parts(p: &str) -> Vec<String> {
    Path::new(p)
        .components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect()
}

/// The finding's file is the labelled file, possibly under a longer prefix.
fn same_file(finding_file: &str, labeled: &str) -> bool {
    let (a, b) = (parts(finding_file), parts(labeled));
    !b.is_empty() && a.ends_with(&b)
}

fn matches(f: &Finding, p: &Positive, granularity: Granularity) -> bool {
    match granularity {
        Granularity::Function => f.function == p.function || f.entry_points.contains(&p.function),
        Granularity::Line => f.location.line <= p.lines[1] && p.lines[0] <= f.location.end_line,
    }
}

pub fn score<'a>(
    findings: impl IntoIterator<Item = &'a Finding>,
    manifest: &Manifest,
    options: ScoreOptions,
) -> ScoreCard {
    let counted: Vec<&Finding> = findings.into_iter().filter(|f| counted(f, options.include_all)).collect();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut labeled = BTreeSet::new();
    for c in &manifest.contracts {
        let mine: Vec<usize> = counted
            .iter()
            .enumerate()
            .filter(|(_, f)| f.contract == c.name && same_file(&f.location.file, &c.path))
            .map(|(i, _)| i)
            .collect();
        labeled.extend(mine.iter().copied());
        let mut used = BTreeSet::new();
        for p in &c.positives {
            let hits: Vec<usize> = mine.iter().copied().filter(|i| matches(counted[*i], p, options.granularity)).collect();
            if hits.is_empty() {
                fn_ += 1;
            } else {
                tp += 1;
            }
            used.extend(hits);
        }
        fp += mine.iter().filter(|i| !used.contains(*i)).count();
        if c.positives.is_empty() && mine.is_empty() {
            tn += 1;
        }
    }
    let mut card = ScoreCard::from_counts(tp, fp, fn_, tn);
    card.unlabeled = counted.len() - labeled.len();
    card.tagged = counted.iter().filter(|f| f.confidence == Confidence::GasLimited || f.status.is_unknown()).count();
    card
}

/// Every `*.json` report in a directory, by file name.
pub fn load_reports(dir: &Path) -> Result<Vec<Report>, ScoreError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ScoreError::Read(dir.to_path_buf(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| ScoreError::Read(p.clone(), e))?;
            serde_json::from_str(&text).map_err(|e| ScoreError::Report(p.clone(), e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_match_by_suffix() {
        assert!(same_file("../../fixtures/a.sol", "a.sol"));
        assert!(same_file("fixtures/a.sol", "fixtures/a.sol"));
        assert!(same_file("/abs/fixtures/a.sol", "./fixtures/a.sol"));
        assert!(!same_file("fixtures/ba.sol", "a.sol"));
        assert!(!same_file("a.sol", "fixtures/a.sol"));
    }

    #[test]
    fn degenerate_ratios() {
        let c = ScoreCard::from_counts(0, 0, 0, 4);
        assert_eq!((c.precision, c.recall, c.f1), (None, None, None));
        let c = ScoreCard::from_counts(0, 2, 3, 0);
        assert_eq!((c.precision, c.recall, c.f1), (Some(0.0), Some(0.0), Some(0.0)));
        let c = ScoreCard::from_counts(0, 2, 0, 0);
        assert_eq!((c.precision, c.recall), (Some(0.0), None));
        assert_eq!(c.f1, None);
    }
}
