//! Satisfiability backend: SMT-LIB2 text over a long-lived solver process.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::rc::Rc;
use std::time::Duration;

use ceiscan_evm::{Opcode, U256};
use serde::{Deserialize, Serialize};

use crate::term::{Term, T};

/// `term != 0` when `nonzero`, else `term == 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Conjunct {
    pub term: T,
    pub nonzero: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    /// Values for every free variable of the query.
    Sat(BTreeMap<String, U256>),
    Unsat,
    Unknown,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("solver not found (set CEISCAN_Z3 or put z3 on PATH)")]
    NotFound,
    #[error("solver process: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver rejected query: {0}")]
    Rejected(String),
}

pub trait Backend {
    fn check(&mut self, conjuncts: &[Conjunct]) -> Result<SatResult, SolverError>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub z3_path: Option<PathBuf>,
    pub timeout_ms: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            z3_path: None,
            timeout_ms: 10_000,
        }
    }
}

pub const Z3_ENV: &str = "CEISCAN_Z3";

impl SolverConfig {
    pub fn resolve_z3(&self) -> Option<PathBuf> {
        if let Some(p) = &self.z3_path {
            return Some(p.clone());
        }
        if let Some(p) = std::env::var_os(Z3_ENV) {
            return Some(PathBuf::from(p));
        }
        let paths = std::env::var_os("PATH")?;
        std::env::split_paths(&paths).map(|d| d.join("z3")).find(|p| p.is_file())
    }
}

pub struct Z3 {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    declared: BTreeSet<Rc<str>>,
    hashes: BTreeSet<usize>,
}

impl Z3 {
    pub fn start(config: &SolverConfig) -> Result<Self, SolverError> {
        let path = config.resolve_z3().ok_or(SolverError::NotFound)?;
        let mut child = Command::new(&path)
            .args(["-in", "-smt2"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => SolverError::NotFound,
                _ => SolverError::Io(e),
            })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        let mut z3 = Z3 {
            child,
            stdin,
            stdout,
            declared: BTreeSet::new(),
            hashes: BTreeSet::new(),
        };
        z3.send(&format!(
            "(set-option :produce-models true)\n(set-option :timeout {})\n(set-logic QF_UFBV)\n",
            config.timeout_ms
        ))?;
        Ok(z3)
    }

    fn send(&mut self, text: &str) -> Result<(), SolverError> {
        self.stdin.write_all(text.as_bytes())?;
        self.stdin.flush()?;
        Ok(())
    }

    fn read_sexpr(&mut self) -> Result<String, SolverError> {
        let mut out = String::new();
        let mut depth = 0i64;
        loop {
            let mut line = String::new();
            if self.stdout.read_line(&mut line)? == 0 {
                return Err(SolverError::Rejected(format!("solver exited: {out}")));
            }
            depth += line.matches('(').count() as i64 - line.matches(')').count() as i64;
            out.push_str(&line);
            if depth <= 0 && !out.trim().is_empty() {
                return Ok(out);
            }
        }
    }

    fn declare(&mut self, conjuncts: &[Conjunct], out: &mut String) -> BTreeMap<Rc<str>, u16> {
        let mut vars = BTreeMap::new();
        for c in conjuncts {
            c.term.vars(&mut vars);
            hash_arities(&c.term, &mut |n| {
                if self.hashes.insert(n) {
                    let args = vec!["(_ BitVec 256)"; n].join(" ");
                    out.push_str(&format!("(declare-fun keccak{n} ({args}) (_ BitVec 256))\n"));
                }
            });
        }
        for (name, bits) in &vars {
            if self.declared.insert(name.clone()) {
                out.push_str(&format!("(declare-fun |{name}| () (_ BitVec 256))\n"));
                if *bits < 256 {
                    out.push_str(&format!("(assert (bvult |{name}| {}))\n", bv(U256::from(1u8) << *bits as usize)));
                }
            }
        }
        vars
    }
}

impl Drop for Z3 {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Backend for Z3 {
    fn check(&mut self, conjuncts: &[Conjunct]) -> Result<SatResult, SolverError> {
        let mut text = String::new();
        let vars = self.declare(conjuncts, &mut text);
        text.push_str("(push 1)\n");
        let mut printer = Printer::default();
        let asserts: Vec<String> = conjuncts.iter().map(|c| printer.boolean(&c.term, c.nonzero)).collect();
        text.push_str(&printer.defs);
        for a in asserts {
            text.push_str(&format!("(assert {a})\n"));
        }
        text.push_str("(check-sat)\n");
        self.send(&text)?;
        let answer = self.read_sexpr()?;
        let result = match answer.trim() {
            "sat" => {
                let model = if vars.is_empty() {
                    BTreeMap::new()
                } else {
                    let names: Vec<String> = vars.keys().map(|n| format!("|{n}|")).collect();
                    self.send(&format!("(get-value ({}))\n", names.join(" ")))?;
                    parse_values(&self.read_sexpr()?)
                };
                SatResult::Sat(model)
            }
            "unsat" => SatResult::Unsat,
            "unknown" | "timeout" => SatResult::Unknown,
            other => {
                let _ = self.send("(pop 1)\n");
                return Err(SolverError::Rejected(other.to_string()));
            }
        };
        self.send("(pop 1)\n")?;
        Ok(result)
    }
}

/// One-shot satisfiability check with a fresh solver process.
pub fn solve(conjuncts: &[Conjunct], timeout: Duration, config: &SolverConfig) -> Result<SatResult, SolverError> {
    let config = SolverConfig {
        timeout_ms: timeout.as_millis().max(1) as u64,
        ..config.clone()
    };
    Z3::start(&config)?.check(conjuncts)
}

fn parse_values(text: &str) -> BTreeMap<String, U256> {
    let re = regex::Regex::new(r"\(\s*\|?([^|\s()]+)\|?\s+(#x[0-9a-fA-F]+|#b[01]+|\(_ bv\d+ \d+\))\s*\)").expect("valid regex");
    re.captures_iter(text)
        .filter_map(|c| {
            let v = &c[2];
            let value = if let Some(h) = v.strip_prefix("#x") {
                U256::from_str_radix(h, 16).ok()?
            } else if let Some(b) = v.strip_prefix("#b") {
                U256::from_str_radix(b, 2).ok()?
            } else {
                let digits = v.trim_start_matches("(_ bv").split(' ').next()?;
                U256::from_str_radix(digits, 10).ok()?
            };
            Some((c[1].to_string(), value))
        })
        .collect()
}

fn hash_arities(t: &Term, f: &mut dyn FnMut(usize)) {
    match t {
        Term::Const(_) | Term::Var(..) => {}
        Term::App(_, a) => a.iter().for_each(|x| hash_arities(x, f)),
        Term::Keccak(a) => {
            f(a.len());
            a.iter().for_each(|x| hash_arities(x, f));
        }
    }
}

fn bv(v: U256) -> String {
    format!("#x{v:064x}")
}

/// Prints terms as SMT-LIB, naming every shared interior node once.
#[derive(Default)]
struct Printer {
    names: HashMap<*const Term, String>,
    defs: String,
}

impl Printer {
    fn word(&mut self, t: &T) -> String {
        match &**t {
            Term::Const(v) => return bv(*v),
            Term::Var(n, _) => return format!("|{n}|"),
            _ => {}
        }
        let key = Rc::as_ptr(t);
        if let Some(n) = self.names.get(&key) {
            return n.clone();
        }
        let body = match &**t {
            Term::App(op, a) => self.app(*op, a),
            Term::Keccak(a) => {
                let args: Vec<String> = a.iter().map(|x| self.word(x)).collect();
                format!("(keccak{} {})", a.len(), args.join(" "))
            }
            _ => unreachable!(),
        };
        let name = format!("|_t{}|", self.names.len());
        self.defs.push_str(&format!("(define-fun {name} () (_ BitVec 256) {body})\n"));
        self.names.insert(key, name.clone());
        name
    }

    fn relation(&mut self, op: Opcode, a: &[T]) -> Option<String> {
        let f = match op {
            Opcode::LT => "bvult",
            Opcode::GT => "bvugt",
            Opcode::SLT => "bvslt",
            Opcode::SGT => "bvsgt",
            Opcode::EQ => "=",
            _ => return None,
        };
        Some(format!("({f} {} {})", self.word(&a[0]), self.word(&a[1])))
    }

    /// `t != 0` (or `t == 0` when `positive` is false) as a formula.
    fn boolean(&mut self, t: &T, positive: bool) -> String {
        let atom = match &**t {
            Term::App(Opcode::ISZERO, a) => return self.boolean(&a[0], !positive),
            Term::App(op, a) => self.relation(*op, a),
            _ => None,
        };
        let atom = atom.unwrap_or_else(|| format!("(not (= {} {}))", self.word(t), bv(U256::ZERO)));
        if positive {
            atom
        } else {
            format!("(not {atom})")
        }
    }

    fn app(&mut self, op: Opcode, a: &[T]) -> String {
        let w: Vec<String> = a.iter().map(|x| self.word(x)).collect();
        let zero = bv(U256::ZERO);
        let one = bv(U256::from(1));
        let bin = |f: &str| format!("({f} {} {})", w[0], w[1]);
        let guarded = |f: &str| format!("(ite (= {} {zero}) {zero} ({f} {} {}))", w[1], w[0], w[1]);
        let wide = |f: &str| {
            let ext = |s: &str| format!("((_ zero_extend 256) {s})");
            format!(
                "(ite (= {} {zero}) {zero} ((_ extract 255 0) (bvurem ({f} {} {}) {})))",
                w[2],
                ext(&w[0]),
                ext(&w[1]),
                ext(&w[2])
            )
        };
        match op {
            Opcode::ADD => bin("bvadd"),
            Opcode::MUL => bin("bvmul"),
            Opcode::SUB => bin("bvsub"),
            Opcode::DIV => guarded("bvudiv"),
            Opcode::SDIV => guarded("bvsdiv"),
            Opcode::MOD => guarded("bvurem"),
            Opcode::SMOD => guarded("bvsrem"),
            Opcode::ADDMOD => wide("bvadd"),
            Opcode::MULMOD => wide("bvmul"),
            Opcode::SIGNEXTEND => {
                let b = a[0].as_const().expect("signextend index is constant").to::<usize>();
                if b >= 31 {
                    w[1].clone()
                } else {
                    let bits = 8 * (b + 1);
                    format!("((_ sign_extend {}) ((_ extract {} 0) {}))", 256 - bits, bits - 1, w[1])
                }
            }
            Opcode::LT | Opcode::GT | Opcode::SLT | Opcode::SGT | Opcode::EQ => {
                let r = self.relation(op, a).expect("relation");
                format!("(ite {r} {one} {zero})")
            }
            Opcode::ISZERO => format!("(ite (= {} {zero}) {one} {zero})", w[0]),
            Opcode::AND => bin("bvand"),
            Opcode::OR => bin("bvor"),
            Opcode::XOR => bin("bvxor"),
            Opcode::NOT => format!("(bvnot {})", w[0]),
            Opcode::BYTE => format!(
                "(ite (bvult {i} {n32}) (bvand (bvlshr {x} (bvmul (bvsub {n31} {i}) {n8})) {ff}) {zero})",
                i = w[0],
                x = w[1],
                n32 = bv(U256::from(32)),
                n31 = bv(U256::from(31)),
                n8 = bv(U256::from(8)),
                ff = bv(U256::from(0xff)),
            ),
            Opcode::SHL => format!("(bvshl {} {})", w[1], w[0]),
            Opcode::SHR => format!("(bvlshr {} {})", w[1], w[0]),
            Opcode::SAR => format!("(bvashr {} {})", w[1], w[0]),
            other => unreachable!("{other:?} is never built symbolically"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsing() {
        let m = parse_values("((|caller| #x00000000000000000000000000000000000000000000000000000000000000ff)\n (arg1 (_ bv12 256)))");
        assert_eq!(m["caller"], U256::from(255));
        assert_eq!(m["arg1"], U256::from(12));
    }
}
