//! Reentrancy analysis driver: configuration, the analysis pipeline over
//! source files, reports, and scoring against labelled corpora.

pub mod analyze;
pub mod config;
pub mod report;
pub mod score;

pub use analyze::{analyze, analyze_file, source_files, AnalyzeError, Options};
pub use config::{AnalysisConfig, ConfigError, SolcSettings, Stages};
pub use report::{Finding, FindingStatus, Location, Report, UnitReport};
pub use score::{counted, load_reports, score, Granularity, Manifest, ScoreCard, ScoreError, ScoreOptions};
