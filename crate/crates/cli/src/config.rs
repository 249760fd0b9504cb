//! Analysis settings, loadable from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ceiscan_pdg::SlicerConfig;
use ceiscan_symexec::StageTwoConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stages {
    #[serde(rename = "stage1-only")]
    Stage1Only,
    #[serde(rename = "stage2-only")]
    Stage2Only,
    #[default]
    #[serde(rename = "both")]
    Both,
}

impl Stages {
    pub fn runs_stage_one(self) -> bool {
        self != Stages::Stage2Only
    }

    pub fn runs_stage_two(self) -> bool {
        self != Stages::Stage1Only
    }
}

impl FromStr for Stages {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(Stages::Both),
            "1" | "stage1-only" => Ok(Stages::Stage1Only),
            "2" | "stage2-only" => Ok(Stages::Stage2Only),
            _ => Err(ConfigError::Invalid(format!("unknown stage selection `{s}`"))),
        }
    }
}

impl fmt::Display for Stages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stages::Stage1Only => "stage1-only",
            Stages::Stage2Only => "stage2-only",
            Stages::Both => "both",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolcSettings {
    pub path: Option<PathBuf>,
    pub version: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Seconds per source file, compilation included.
    pub time_budget: u64,
    pub stages: Stages,
    /// Files analyzed in parallel.
    pub jobs: usize,
    pub solc: SolcSettings,
    pub slicer: SlicerConfig,
    pub symexec: StageTwoConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            time_budget: 300,
            stages: Stages::Both,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()).min(4),
            solc: SolcSettings::default(),
            slicer: SlicerConfig::default(),
            symexec: StageTwoConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: AnalysisConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.symexec.budget;
        let checks = [
            ("time_budget", self.time_budget as usize),
            ("jobs", self.jobs),
            ("symexec.budget.max_blocks_per_path", b.max_blocks_per_path),
            ("symexec.budget.max_paths", b.max_paths),
            ("symexec.budget.max_call_depth", b.max_call_depth),
            ("symexec.budget.loop_bound", b.loop_bound as usize),
            ("symexec.budget.time_budget_ms", b.time_budget_ms as usize),
            ("symexec.solver.timeout_ms", self.symexec.solver.timeout_ms as usize),
            ("slicer.max_paths", self.slicer.max_paths),
            ("slicer.max_call_depth", self.slicer.max_call_depth),
        ];
        match checks.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ConfigError::Invalid(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }

    /// Short digest of every setting that can change results.
    pub fn fingerprint(&self) -> String {
        let relevant = AnalysisConfig { jobs: 1, ..self.clone() };
        let json = serde_json::to_string(&relevant).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn compiler(&self, want_bytecode: bool) -> ceiscan_frontend::CompilerConfig {
        ceiscan_frontend::CompilerConfig {
            solc_path: self.solc.path.clone(),
            solc_version: self.solc.version.clone(),
            want_bytecode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = AnalysisConfig::from_toml("").expect("empty is default");
        assert_eq!(c.time_budget, 300);
        assert_eq!(c.stages, Stages::Both);
        assert_eq!(c.symexec.budget.max_blocks_per_path, 512);
        assert_eq!(c.symexec.budget.max_paths, 2000);
        assert_eq!(c.symexec.solver.timeout_ms, 10_000);
        let c = AnalysisConfig::from_toml(
            "time_budget = 60\nstages = \"stage1-only\"\n[slicer]\nallowlist = [\"feeCollector\"]\n[symexec.budget]\nloop_bound = 3\n",
        )
        .expect("parses");
        assert_eq!(c.time_budget, 60);
        assert_eq!(c.stages, Stages::Stage1Only);
        assert_eq!(c.slicer.allowlist, vec!["feeCollector".to_string()]);
        assert_eq!(c.symexec.budget.loop_bound, 3);
        assert_eq!(c.symexec.budget.max_call_depth, 3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AnalysisConfig::from_toml("time_budget = 0").is_err());
        assert!(AnalysisConfig::from_toml("stages = \"all\"").is_err());
        assert!(AnalysisConfig::from_toml("[symexec.budget]\nmax_paths = 0").is_err());
        assert!(AnalysisConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn fingerprint_ignores_parallelism() {
        let a = AnalysisConfig::default();
        let b = AnalysisConfig { jobs: 3, ..a.clone() };
        let c = AnalysisConfig { time_budget: 10, ..a.clone() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn stage_flags() {
        assert_eq!("1".parse::<Stages>().expect("1"), Stages::Stage1Only);
        assert_eq!("2".parse::<Stages>().expect("2"), Stages::Stage2Only);
        assert_eq!("both".parse::<Stages>().expect("both"), Stages::Both);
        assert!("3".parse::<Stages>().is_err());
    }
}
