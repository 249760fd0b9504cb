//! Solidity compiler discovery and standard-JSON invocation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::{json, Value};

use crate::FrontendError;

#[derive(Clone, Debug, Default)]
pub struct CompilerConfig {
    /// Explicit compiler binary (`solc` or `solcjs`).
    pub solc_path: Option<PathBuf>,
    /// Preferred compiler version; used to look for `solc-<version>`.
    pub solc_version: Option<String>,
    /// Request deployed bytecode, source maps and storage layout.
    pub want_bytecode: bool,
}

pub const SOLC_ENV: &str = "CEISCAN_SOLC";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Compiler {
    pub path: PathBuf,
    pub version: String,
}

fn in_path(name: &str) -> Option<PathBuf> {
    let paths = std::env::var_os("PATH")?;
    std::env::split_paths(&paths)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

fn probe_version(path: &Path) -> Option<String> {
    let out = Command::new(path).arg("--version").output().ok()?;
    let text = String::from_utf8_lossy(&out.stdout);
    // solc prints "Version: 0.8.26+commit...", solcjs prints the bare version
    text.lines()
        .map(|l| l.trim().trim_start_matches("Version:").trim())
        .find(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .map(str::to_string)
}

impl CompilerConfig {
    /// Resolution order: explicit path, `CEISCAN_SOLC`, `solc-<version>`,
    /// `solc`, `solcjs`.
    pub fn resolve(&self) -> Result<Compiler, FrontendError> {
        let mut candidates: Vec<PathBuf> = Vec::new();
        if let Some(p) = &self.solc_path {
            candidates.push(p.clone());
        } else {
            if let Some(p) = std::env::var_os(SOLC_ENV) {
                candidates.push(PathBuf::from(p));
            }
            if let Some(v) = &self.solc_version {
                candidates.extend(in_path(&format!("solc-{v}")));
                candidates.extend(in_path(&format!("solc-v{v}")));
            }
            candidates.extend(in_path("solc"));
            candidates.extend(in_path("solcjs"));
        }
        for path in candidates {
            if let Some(version) = probe_version(&path) {
                return Ok(Compiler { path, version });
            }
        }
        Err(FrontendError::CompilerNotFound)
    }
}

impl Compiler {
    pub fn short_version(&self) -> &str {
        self.version.split('+').next().unwrap_or(&self.version)
    }

    /// Runs the compiler on standard JSON input and returns the parsed
    /// output.
    pub fn run(&self, input: &Value) -> Result<Value, FrontendError> {
        let mut child = Command::new(&self.path)
            .arg("--standard-json")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| FrontendError::CompilerFailed {
                stderr: format!("{}: {e}", self.path.display()),
            })?;
        child
            .stdin
            .take()
            .expect("piped")
            .write_all(input.to_string().as_bytes())?;
        let out = child.wait_with_output()?;
        let stdout = String::from_utf8_lossy(&out.stdout);
        // solcjs may print banner lines before the JSON document
        let start = stdout.find('{').ok_or_else(|| FrontendError::CompilerFailed {
            stderr: format!(
                "{}{}",
                String::from_utf8_lossy(&out.stderr),
                stdout.chars().take(2000).collect::<String>()
            ),
        })?;
        let value: Value = serde_json::from_str(&stdout[start..])?;
        let errors: Vec<String> = value["errors"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|e| e["severity"] == "error")
            .map(|e| {
                e["formattedMessage"]
                    .as_str()
                    .or_else(|| e["message"].as_str())
                    .unwrap_or("compiler error")
                    .to_string()
            })
            .collect();
        if !errors.is_empty() {
            return Err(FrontendError::CompileErrors(errors));
        }
        Ok(value)
    }
}

/// Standard JSON input for the given sources.
pub fn standard_input(sources: &BTreeMap<String, String>, want_bytecode: bool) -> Value {
    let srcs: serde_json::Map<String, Value> = sources
        .iter()
        .map(|(name, content)| (name.clone(), json!({ "content": content })))
        .collect();
    let per_contract: Vec<&str> = if want_bytecode {
        vec![
            "evm.deployedBytecode.object",
            "evm.deployedBytecode.sourceMap",
            "storageLayout",
        ]
    } else {
        vec![]
    };
    json!({
        "language": "Solidity",
        "sources": srcs,
        "settings": {
            "optimizer": { "enabled": false },
            "outputSelection": { "*": { "": ["ast"], "*": per_contract } }
        }
    })
}

/// Reads `roots` and everything they import through relative or
/// root-relative paths. Keys are the unit names used in import directives.
pub fn collect_sources(roots: &[PathBuf]) -> Result<BTreeMap<String, String>, FrontendError> {
    let mut out = BTreeMap::new();
    let mut work: Vec<(String, PathBuf)> = roots
        .iter()
        .map(|p| (unit_name(p), p.clone()))
        .collect();
    while let Some((name, path)) = work.pop() {
        if out.contains_key(&name) {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| FrontendError::Io(format!("{}: {e}", path.display())))?;
        for import in imports(&text) {
            let dir = path.parent().unwrap_or(Path::new("."));
            let target = if import.starts_with('.') {
                dir.join(&import)
            } else {
                PathBuf::from(&import)
            };
            let target_name = if import.starts_with('.') {
                normalize(&Path::new(&name).parent().unwrap_or(Path::new("")).join(&import))
            } else {
                import.clone()
            };
            if target.is_file() {
                work.push((target_name, target));
            }
        }
        out.insert(name, text);
    }
    Ok(out)
}

fn unit_name(p: &Path) -> String {
    normalize(p)
}

fn normalize(p: &Path) -> String {
    let mut parts: Vec<String> = Vec::new();
    for c in p.components() {
        match c {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                if parts.last().is_some_and(|l| l != "..") {
                    parts.pop();
                } else {
                    parts.push("..".into());
                }
            }
            other => parts.push(other.as_os_str().to_string_lossy().into_owned()),
        }
    }
    parts.join("/").replace("//", "/")
}

fn imports(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r#"(?m)^\s*import\s+[^;]*?["']([^"']+)["']"#).expect("valid regex");
    re.captures_iter(text).map(|c| c[1].to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn import_scan() {
        let src = "import \"./A.sol\";\nimport {X} from '../lib/B.sol';\n// import \"nope\"";
        assert_eq!(imports(src), vec!["./A.sol", "../lib/B.sol"]);
    }

    #[test]
    fn path_normalization() {
        assert_eq!(normalize(Path::new("a/./b/../c.sol")), "a/c.sol");
        assert_eq!(normalize(Path::new("../x.sol")), "../x.sol");
    }

    #[test]
    fn input_selects_ast_only_for_stage_one() {
        let mut s = BTreeMap::new();
        s.insert("a.sol".to_string(), "contract A {}".to_string());
        let v = standard_input(&s, false);
        assert_eq!(v["settings"]["outputSelection"]["*"]["*"], json!([]));
        let v = standard_input(&s, true);
        assert!(v["settings"]["outputSelection"]["*"]["*"]
            .as_array()
            .unwrap()
            .contains(&json!("storageLayout")));
    }
}
