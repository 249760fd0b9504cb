use std::path::PathBuf;
use std::process::ExitCode;

use ceiscan::{analyze, load_reports, score, AnalysisConfig, Granularity, Manifest, Options, ScoreOptions, Stages};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ceiscan", version, about = "Detect reentrancy in Solidity contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze .sol files or directories.
    Analyze {
        paths: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// both, 1 (source analysis only) or 2 (bytecode only)
        #[arg(long)]
        stage: Option<Stages>,
        /// Seconds per file.
        #[arg(long)]
        timeout: Option<u64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write graphs in DOT format to this directory.
        #[arg(long)]
        emit_dot: Option<PathBuf>,
        #[arg(long)]
        solc_version: Option<String>,
        #[arg(long)]
        solc_path: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Write the report here instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Score saved JSON reports against a labelled manifest.
    Score {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "function")]
        granularity: Granularity,
        /// Count every reported finding, including gas-limited and unchecked ones.
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Analyze {
            paths,
            config,
            stage,
            timeout,
            format,
            emit_dot,
            solc_version,
            solc_path,
            jobs,
            output,
        } => {
            let mut cfg = match config {
                Some(p) => AnalysisConfig::load(&p)?,
                None => AnalysisConfig::default(),
            };
            if let Some(s) = stage {
                cfg.stages = s;
            }
            if let Some(t) = timeout {
                cfg.time_budget = t;
            }
            if solc_version.is_some() {
                cfg.solc.version = solc_version;
            }
            if solc_path.is_some() {
                cfg.solc.path = solc_path;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            cfg.validate()?;
            let report = analyze(&paths, &cfg, &Options { emit_dot })?;
            let text = match format {
                Format::Json => report.to_json() + "\n",
                Format::Text => report.render_text(),
            };
            match output {
                Some(p) => std::fs::write(&p, text)?,
                None => print!("{text}"),
            }
            for u in report.units.iter().filter(|u| u.error.is_some()) {
                eprintln!("{}: {}", u.path, u.error.as_deref().unwrap_or_default());
            }
            Ok(report.exit_code() as u8)
        }
        Command::Score {
            reports,
            labels,
            granularity,
            all,
            format,
        } => {
            let manifest = Manifest::load(&labels)?;
            let reports = load_reports(&reports)?;
            let card = score(
                reports.iter().flat_map(|r| r.findings()),
                &manifest,
                ScoreOptions {
                    granularity,
                    include_all: all,
                },
            );
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&card)?),
                Format::Text => println!("{card}"),
            }
            Ok(0)
        }
    }
}
