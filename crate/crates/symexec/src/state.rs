//! Symbolic machine state.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use ceiscan_evm::{build_cfg, disassemble, Cfg, Instruction, Opcode, U256};
use serde::Serialize;

use crate::memory::{ByteVal, Memory};
use crate::smt::Conjunct;
use crate::term::{var, T};

/// Runtime code with its recovered CFG.
#[derive(Debug)]
pub struct Code {
    pub bytes: Vec<u8>,
    pub instructions: BTreeMap<usize, Instruction>,
    pub cfg: Cfg,
    pub jumpdests: BTreeSet<usize>,
}

impl Code {
    pub fn new(bytes: Vec<u8>) -> Self {
        let instructions: BTreeMap<usize, Instruction> = disassemble(&bytes).into_iter().map(|i| (i.offset, i)).collect();
        let jumpdests = instructions
            .values()
            .filter(|i| i.opcode == Opcode::JUMPDEST)
            .map(|i| i.offset)
            .collect();
        let cfg = build_cfg(&bytes);
        Code {
            bytes,
            instructions,
            cfg,
            jumpdests,
        }
    }
}

#[derive(Debug)]
pub struct Account {
    pub name: String,
    pub address: U256,
    pub code: Rc<Code>,
}

/// Storage as key-value pairs over symbolic keys. Keys compare
/// syntactically; reads of unwritten keys return one fresh variable per key.
#[derive(Clone, Debug, Default)]
pub struct Register {
    pub slots: BTreeMap<(usize, T), T>,
    /// Initial values read before any write: (account, key) -> variable.
    pub initial: BTreeMap<(usize, T), T>,
    /// Every written (account, key), in order.
    pub writes: Vec<(usize, T)>,
    pub transient: BTreeMap<(usize, T), T>,
}

impl Register {
    pub fn load(&mut self, account: usize, key: &T, fresh: &mut dyn FnMut() -> T) -> T {
        let k = (account, key.clone());
        if let Some(v) = self.slots.get(&k) {
            return v.clone();
        }
        self.initial.entry(k).or_insert_with(fresh).clone()
    }

    pub fn store(&mut self, account: usize, key: &T, value: T) {
        self.writes.push((account, key.clone()));
        self.slots.insert((account, key.clone()), value);
    }
}

/// Conjuncts only ever grow along a path.
#[derive(Clone, Debug, Default)]
pub struct PathConstraint {
    pub conjuncts: Vec<Conjunct>,
    /// (account, block start offset, branch taken) per branch conjunct;
    /// `None` for assumptions.
    pub provenance: Vec<Option<(usize, usize, bool)>>,
}

impl PathConstraint {
    pub fn assume(&mut self, term: T, nonzero: bool) {
        self.push(term, nonzero, None);
    }

    pub fn push(&mut self, term: T, nonzero: bool, origin: Option<(usize, usize, bool)>) {
        if let Some(v) = term.as_const() {
            if v.is_zero() != nonzero {
                return;
            }
        }
        self.conjuncts.push(Conjunct { term, nonzero });
        self.provenance.push(origin);
    }

    /// Some conjunct is a constant contradiction.
    pub fn trivially_false(&self) -> bool {
        self.conjuncts
            .iter()
            .any(|c| c.term.as_const().is_some_and(|v| v.is_zero() == c.nonzero))
    }
}

#[derive(Clone, Debug)]
pub struct Frame {
    /// Storage and address context.
    pub account: usize,
    /// Account whose code runs (differs under DELEGATECALL).
    pub code: usize,
    pub pc: usize,
    pub stack: Vec<T>,
    pub memory: Memory,
    pub calldata: Vec<ByteVal>,
    pub caller: T,
    pub callvalue: T,
    pub returndata: Vec<ByteVal>,
    pub is_static: bool,
    /// Where the caller wants the output copied.
    pub ret_area: (usize, usize),
    /// Storage to restore if this frame reverts.
    pub snapshot: Option<Register>,
    pub visits: BTreeMap<(usize, u64), u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub account: usize,
    /// Block start offset.
    pub block: usize,
}

/// A call into unknown code before the target, answered symbolically.
#[derive(Clone, Debug)]
pub struct Stub {
    pub account: usize,
    pub pc: usize,
    pub success: T,
    pub data: T,
}

/// Transaction inputs of one phase, for witness extraction.
#[derive(Clone, Debug)]
pub struct TxInputs {
    pub caller: T,
    pub callvalue: T,
    pub calldata: Vec<ByteVal>,
}

#[derive(Clone, Debug)]
pub struct SymbolicState {
    pub frames: Vec<Frame>,
    pub register: Register,
    pub constraints: PathConstraint,
    /// 1 for the initial transaction, 2 for the re-entrant call.
    pub phase: u8,
    pub fresh: u32,
    pub blocks: usize,
    pub path: Vec<PathStep>,
    pub stubs: Vec<Stub>,
    pub txs: Vec<TxInputs>,
    /// Address term of the call at which phase 1 reached the target.
    pub attacker: Option<T>,
    pub forks_since_check: u32,
}

impl SymbolicState {
    pub fn fresh_var(&mut self, prefix: &str, bits: u16) -> T {
        self.fresh += 1;
        var(&format!("{prefix}{}", self.fresh), bits)
    }

    pub fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("at least one frame")
    }

    pub fn call_depth(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }
}
