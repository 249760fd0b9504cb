//! Solidity front end: compiles sources and lowers the AST into a
//! statement-level model with resolved calls.

pub mod compiler;
mod lower;
pub mod model;
pub mod srcmap;
mod taint;

use std::collections::BTreeMap;
use std::path::PathBuf;

pub use compiler::{collect_sources, standard_input, Compiler, CompilerConfig};
pub use lower::build_model;
pub use model::*;

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("no Solidity compiler found (set --solc-path or CEISCAN_SOLC)")]
    CompilerNotFound,
    #[error("compiler failed: {stderr}")]
    CompilerFailed { stderr: String },
    #[error("compilation errors:\n{}", .0.join("\n"))]
    CompileErrors(Vec<String>),
    #[error("unsupported AST: {0}")]
    UnsupportedAst(String),
    #[error("source not provided for unit {0}")]
    MissingSource(String),
    #[error("io: {0}")]
    Io(String),
    #[error("malformed compiler output: {0}")]
    Json(String),
}

impl From<std::io::Error> for FrontendError {
    fn from(e: std::io::Error) -> Self {
        FrontendError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for FrontendError {
    fn from(e: serde_json::Error) -> Self {
        FrontendError::Json(e.to_string())
    }
}

/// Compiles the given files (and their imports) and builds the model.
pub fn compile_and_load(paths: &[PathBuf], config: &CompilerConfig) -> Result<ContractModel, FrontendError> {
    let sources = collect_sources(paths)?;
    compile_sources(&sources, config)
}

/// Compiles in-memory sources keyed by unit name.
pub fn compile_sources(sources: &BTreeMap<String, String>, config: &CompilerConfig) -> Result<ContractModel, FrontendError> {
    let compiler = config.resolve()?;
    let output = compiler.run(&standard_input(sources, config.want_bytecode))?;
    build_model(&output, sources, &compiler.version)
}
