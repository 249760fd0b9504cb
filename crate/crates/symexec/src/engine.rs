//! Target-directed path exploration over runtime bytecode.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::time::{Duration, Instant};

use ceiscan_evm::{Opcode, U256};
use serde::{Deserialize, Serialize};

use crate::memory::{all_const, load_word, word_bytes, ByteVal, Memory};
use crate::smt::{Backend, SatResult};
use crate::state::{Account, Frame, PathConstraint, PathStep, Register, Stub, SymbolicState, TxInputs};
use crate::term::{app, is_pure, keccak, keccak_bytes, konst, slot_root, var, word, Term, T};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Confirmed,
    Unreachable,
    UnknownTimeout,
    UnknownBudget,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Per transaction; the re-entrant call gets its own allowance.
    pub max_blocks_per_path: usize,
    pub max_paths: usize,
    pub max_call_depth: usize,
    /// Times a loop body may repeat along one path.
    pub loop_bound: u32,
    pub time_budget_ms: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_blocks_per_path: 512,
            max_paths: 2000,
            max_call_depth: 3,
            loop_bound: 2,
            time_budget_ms: 300_000,
        }
    }
}

pub struct Program {
    pub accounts: Vec<Account>,
}

impl Program {
    pub fn address(&self, account: usize) -> U256 {
        self.accounts[account].address
    }

    pub fn by_address(&self, address: U256) -> Option<usize> {
        self.accounts.iter().position(|a| a.address == address)
    }
}

/// ABI shape of one entry parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    /// One head word whose value fits in this many bits.
    Word(u16),
    /// Dynamic data; sent empty.
    Dynamic,
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub account: usize,
    /// Empty for the receive and fallback functions.
    pub selector: Vec<u8>,
    pub params: Vec<Param>,
}

#[derive(Clone, Debug, Default)]
pub struct Target {
    /// CALL-family instructions of the interaction in the entry account.
    pub pcs: BTreeSet<usize>,
    /// (account, declared slot) of guard variables whose write counts as the
    /// effect.
    pub guard_slots: Vec<(usize, U256)>,
    /// Require a second, re-entrant call of the same entry to reach the
    /// target again.
    pub reentry: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub paths: usize,
    pub cut_paths: usize,
    pub solver_queries: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessAccount {
    pub name: String,
    pub address: U256,
    #[serde(skip)]
    pub code: Vec<u8>,
    pub storage: BTreeMap<U256, U256>,
    pub balance: U256,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessTx {
    pub caller: U256,
    pub to: U256,
    pub value: U256,
    #[serde(serialize_with = "hex_bytes")]
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessStub {
    /// Account making the call.
    pub from: U256,
    pub pc: usize,
    pub success: bool,
    #[serde(serialize_with = "hex_bytes")]
    pub data: Vec<u8>,
}

fn hex_bytes<S: serde::Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("0x{}", hex::encode(b)))
}

/// A concrete scenario that should drive the target: initial world, the
/// transaction, and the re-entrant call made from the target call, if any.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub accounts: Vec<WitnessAccount>,
    pub transaction: WitnessTx,
    pub reentry: Option<WitnessTx>,
    pub target_address: U256,
    pub target_pcs: Vec<usize>,
    pub attacker: U256,
    /// Answers for calls into unknown code before the target, in order.
    pub stubs: Vec<WitnessStub>,
    /// (address, key) of guard storage touched on the path; none may be
    /// written before the target call.
    pub guard_keys: Vec<(U256, U256)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub model: Option<BTreeMap<String, U256>>,
    pub path: Vec<PathStep>,
    pub witness: Option<Witness>,
    pub stats: Stats,
}

impl Verdict {
    pub fn without_paths(status: Status) -> Self {
        Verdict {
            status,
            model: None,
            path: Vec::new(),
            witness: None,
            stats: Stats::default(),
        }
    }
}

/// Variables an attacker chooses: sender, call data, and data returned by
/// unknown code.
pub fn attacker_controlled(name: &str) -> bool {
    ["caller", "arg", "origin", "ret"].iter().any(|p| name.starts_with(p))
}

pub enum Callee {
    Known(usize),
    Symbolic,
}

pub struct CallArgs {
    pub op: Opcode,
    pub pc: usize,
    pub address: T,
    pub value: T,
    pub input: Vec<ByteVal>,
    pub ret_area: (usize, usize),
}

/// Enters a known callee, or answers an unknown one with fresh symbols.
/// The caller's pc must already point past the call.
pub fn call_context_switch(state: &mut SymbolicState, program: &Program, callee: Callee, args: CallArgs, max_depth: usize) {
    let callee = if state.call_depth() >= max_depth {
        Callee::Symbolic
    } else {
        callee
    };
    match callee {
        Callee::Known(code) => {
            let parent = state.frames.last().expect("caller frame");
            let here = konst(program.address(parent.account));
            let (account, caller, callvalue) = match args.op {
                Opcode::DELEGATECALL => (parent.account, parent.caller.clone(), parent.callvalue.clone()),
                Opcode::CALLCODE => (parent.account, here, args.value),
                _ => (code, here, args.value),
            };
            let frame = Frame {
                account,
                code,
                pc: 0,
                stack: Vec::new(),
                memory: Memory::default(),
                calldata: args.input,
                caller,
                callvalue,
                returndata: Vec::new(),
                is_static: parent.is_static || args.op == Opcode::STATICCALL,
                ret_area: args.ret_area,
                snapshot: Some(state.register.clone()),
                visits: BTreeMap::new(),
            };
            state.frames.push(frame);
        }
        Callee::Symbolic => {
            let success = state.fresh_var("ok", 1);
            let data = state.fresh_var("ret", 256);
            let from = state.frames.last().expect("caller frame").account;
            state.stubs.push(Stub {
                account: from,
                pc: args.pc,
                success: success.clone(),
                data: data.clone(),
            });
            let f = state.frame();
            let out = word_bytes(&data);
            let (off, len) = args.ret_area;
            f.memory.write(off, &out[..len.min(32)]);
            f.returndata = out;
            f.stack.push(success);
        }
    }
}

enum Flow {
    Next,
    Fork(Vec<SymbolicState>),
    End,
    Cut,
    Target,
}

pub struct Engine<'a> {
    program: &'a Program,
    entry: &'a Entry,
    target: &'a Target,
    budget: &'a Budget,
    backend: &'a mut dyn Backend,
    resolve: &'a dyn Fn(usize, usize) -> Option<usize>,
    distance: BTreeMap<usize, usize>,
    guard_roots: BTreeSet<(usize, U256)>,
    deadline: Instant,
    stats: Stats,
    out_of_budget: bool,
    solver_unknown: bool,
}

const MAX_OFFSET: usize = 1 << 20;
const STIPEND: u64 = 2300;

fn conc(t: &T) -> Option<usize> {
    t.as_const().filter(|v| *v < U256::from(MAX_OFFSET)).map(|v| v.to::<usize>())
}

impl<'a> Engine<'a> {
    pub fn new(
        program: &'a Program,
        entry: &'a Entry,
        target: &'a Target,
        budget: &'a Budget,
        backend: &'a mut dyn Backend,
        resolve: &'a dyn Fn(usize, usize) -> Option<usize>,
    ) -> Self {
        let code = &program.accounts[entry.account].code;
        let mut distance = BTreeMap::new();
        let mut queue = VecDeque::new();
        for pc in &target.pcs {
            if let Some(b) = code.cfg.block_containing(*pc) {
                let start = code.cfg.block(b).start_offset;
                distance.insert(start, 0);
                queue.push_back(b);
            }
        }
        let preds = code.cfg.predecessor_map();
        while let Some(b) = queue.pop_front() {
            let d = distance[&code.cfg.block(b).start_offset];
            for e in preds.get(&b).into_iter().flatten() {
                let s = code.cfg.block(e.source).start_offset;
                if let std::collections::btree_map::Entry::Vacant(v) = distance.entry(s) {
                    v.insert(d + 1);
                    queue.push_back(e.source);
                }
            }
        }
        let mut guard_roots = BTreeSet::new();
        for (acct, slot) in &target.guard_slots {
            guard_roots.insert((*acct, *slot));
            guard_roots.insert((*acct, keccak_bytes(&slot.to_be_bytes::<32>())));
        }
        Engine {
            program,
            entry,
            target,
            budget,
            backend,
            resolve,
            distance,
            guard_roots,
            deadline: Instant::now() + Duration::from_millis(budget.time_budget_ms),
            stats: Stats::default(),
            out_of_budget: false,
            solver_unknown: false,
        }
    }

    fn entry_frame(&self, st: &mut SymbolicState, caller: T, suffix: &str) -> Frame {
        let mut calldata: Vec<ByteVal> = self.entry.selector.iter().map(|b| ByteVal::Const(*b)).collect();
        let head = 32 * self.entry.params.len();
        let mut tail = Vec::new();
        for (i, p) in self.entry.params.iter().enumerate() {
            match p {
                Param::Word(bits) => calldata.extend(word_bytes(&var(&format!("arg{i}{suffix}"), *bits))),
                Param::Dynamic => {
                    calldata.extend(word_bytes(&word((head + 32 * tail.len()) as u64)));
                    tail.push(word(0));
                }
            }
        }
        for t in &tail {
            calldata.extend(word_bytes(t));
        }
        let callvalue = var(&format!("callvalue{suffix}"), 256);
        st.txs.push(TxInputs {
            caller: caller.clone(),
            callvalue: callvalue.clone(),
            calldata: calldata.clone(),
        });
        Frame {
            account: self.entry.account,
            code: self.entry.account,
            pc: 0,
            stack: Vec::new(),
            memory: Memory::default(),
            calldata,
            caller,
            callvalue,
            returndata: Vec::new(),
            is_static: false,
            ret_area: (0, 0),
            snapshot: None,
            visits: BTreeMap::new(),
        }
    }

    fn initial_state(&self) -> SymbolicState {
        let mut st = SymbolicState {
            frames: Vec::new(),
            register: Register::default(),
            constraints: PathConstraint::default(),
            phase: 1,
            fresh: 0,
            blocks: 0,
            path: Vec::new(),
            stubs: Vec::new(),
            txs: Vec::new(),
            attacker: None,
            forks_since_check: 0,
        };
        let caller = var("caller", 160);
        st.constraints.assume(caller.clone(), true);
        for a in &self.program.accounts {
            st.constraints.assume(app(Opcode::EQ, vec![caller.clone(), konst(a.address)]), false);
        }
        st.constraints.assume(app(Opcode::EQ, vec![var("origin", 160), caller.clone()]), true);
        let frame = self.entry_frame(&mut st, caller, "");
        st.frames.push(frame);
        st
    }

    fn check(&mut self, st: &SymbolicState) -> SatResult {
        if st.constraints.trivially_false() {
            return SatResult::Unsat;
        }
        self.stats.solver_queries += 1;
        match self.backend.check(&st.constraints.conjuncts) {
            Ok(r) => r,
            Err(_) => SatResult::Unknown,
        }
    }

    pub fn run(mut self) -> Verdict {
        let mut work = vec![self.initial_state()];
        while let Some(mut st) = work.pop() {
            if Instant::now() > self.deadline || self.stats.paths >= self.budget.max_paths {
                self.out_of_budget = true;
                break;
            }
            loop {
                match self.step(&mut st) {
                    Flow::Next => continue,
                    Flow::Fork(children) => {
                        for mut c in children {
                            c.forks_since_check += 1;
                            if c.forks_since_check >= 8 {
                                c.forks_since_check = 0;
                                match self.check(&c) {
                                    SatResult::Unsat => continue,
                                    SatResult::Unknown => self.solver_unknown = true,
                                    SatResult::Sat(_) => {}
                                }
                            }
                            work.push(c);
                        }
                    }
                    Flow::End => self.stats.paths += 1,
                    Flow::Cut => {
                        self.stats.paths += 1;
                        self.stats.cut_paths += 1;
                        self.out_of_budget = true;
                    }
                    Flow::Target => {
                        self.stats.paths += 1;
                        if let Some(v) = self.at_target(st, &mut work) {
                            return v;
                        }
                    }
                }
                break;
            }
        }
        let status = if self.out_of_budget {
            Status::UnknownBudget
        } else if self.solver_unknown {
            Status::UnknownTimeout
        } else {
            Status::Unreachable
        };
        Verdict {
            status,
            model: None,
            path: Vec::new(),
            witness: None,
            stats: self.stats,
        }
    }

    fn effect_applied(&self, st: &SymbolicState) -> bool {
        st.register
            .writes
            .iter()
            .any(|(acct, key)| slot_root(key).is_some_and(|r| self.guard_roots.contains(&(*acct, r))))
    }

    fn at_target(&mut self, mut st: SymbolicState, work: &mut Vec<SymbolicState>) -> Option<Verdict> {
        let f = st.frames.last().expect("frame");
        let code = &self.program.accounts[f.code].code;
        let op = code.instructions[&f.pc].opcode;
        let n = f.stack.len();
        let address = f.stack[n - 2].clone();
        let value = if matches!(op, Opcode::CALL | Opcode::CALLCODE) {
            f.stack[n - 3].clone()
        } else {
            word(0)
        };
        let gas = f.stack[n - 1].clone();
        let account = f.account;
        st.path.push(PathStep {
            account: f.code,
            block: code.cfg.block_containing(f.pc).map_or(f.pc, |b| code.cfg.block(b).start_offset),
        });
        if !address.mentions(&attacker_controlled) {
            return None;
        }
        if st.phase == 1 && self.effect_applied(&st) {
            return None;
        }
        // a callee left with only the stipend cannot call back
        st.constraints.assume(app(Opcode::GT, vec![gas, word(STIPEND)]), true);
        if value.as_const() != Some(U256::ZERO) {
            let balance = var(&format!("selfbalance{account}"), 256);
            st.constraints.assume(app(Opcode::GT, vec![value, balance]), false);
        }
        let model = match self.check(&st) {
            SatResult::Sat(m) => m,
            SatResult::Unsat => return None,
            SatResult::Unknown => {
                self.solver_unknown = true;
                return None;
            }
        };
        if st.phase == 1 && self.target.reentry {
            st.phase = 2;
            st.attacker = Some(address.clone());
            st.blocks = 0;
            let frame = self.entry_frame(&mut st, address, "_r");
            st.frames = vec![frame];
            work.push(st);
            return None;
        }
        let witness = self.witness(&st, &model);
        Some(Verdict {
            status: Status::Confirmed,
            model: Some(model),
            path: st.path.clone(),
            witness: Some(witness),
            stats: self.stats.clone(),
        })
    }

    fn witness(&self, st: &SymbolicState, model: &BTreeMap<String, U256>) -> Witness {
        let get = |name: &str| model.get(name).copied();
        let mut accounts: Vec<WitnessAccount> = self
            .program
            .accounts
            .iter()
            .enumerate()
            .map(|(i, a)| WitnessAccount {
                name: a.name.clone(),
                address: a.address,
                code: a.code.bytes.clone(),
                storage: BTreeMap::new(),
                balance: get(&format!("selfbalance{i}")).unwrap_or(U256::from(10u8).pow(U256::from(30u8))),
            })
            .collect();
        for ((acct, key), v) in &st.register.initial {
            let value = v.eval(model);
            if !value.is_zero() {
                accounts[*acct].storage.insert(key.eval(model), value);
            }
        }
        let tx = |inputs: &TxInputs| WitnessTx {
            caller: inputs.caller.eval(model),
            to: self.program.address(self.entry.account),
            value: inputs.callvalue.eval(model),
            data: inputs
                .calldata
                .iter()
                .map(|b| match b {
                    ByteVal::Const(c) => *c,
                    ByteVal::Of(w, i) => w.eval(model).byte(31 - *i as usize),
                })
                .collect(),
        };
        let mut guard_keys = BTreeSet::new();
        for (acct, key) in st.register.initial.keys().chain(st.register.writes.iter()) {
            if slot_root(key).is_some_and(|r| self.guard_roots.contains(&(*acct, r))) {
                guard_keys.insert((self.program.address(*acct), key.eval(model)));
            }
        }
        Witness {
            accounts,
            transaction: tx(&st.txs[0]),
            reentry: st.txs.get(1).map(tx),
            target_address: self.program.address(self.entry.account),
            target_pcs: self.target.pcs.iter().copied().collect(),
            attacker: st.attacker.as_ref().map_or_else(
                || {
                    let f = st.frames.last().expect("frame");
                    f.stack[f.stack.len() - 2].eval(model)
                },
                |a| a.eval(model),
            ),
            stubs: st
                .stubs
                .iter()
                .map(|s| WitnessStub {
                    from: self.program.address(s.account),
                    pc: s.pc,
                    success: !s.success.eval(model).is_zero(),
                    data: s.data.eval(model).to_be_bytes::<32>().to_vec(),
                })
                .collect(),
            guard_keys: guard_keys.into_iter().collect(),
        }
    }

    /// Counts a block entry; false when a budget is exceeded.
    fn enter_block(&self, st: &mut SymbolicState) -> bool {
        let f = st.frames.last_mut().expect("frame");
        let code = &self.program.accounts[f.code].code;
        if code.cfg.block_at(f.pc).is_none() {
            return true;
        }
        let mut h = DefaultHasher::new();
        f.stack.len().hash(&mut h);
        for t in &f.stack {
            if let Some(v) = conc(t).filter(|v| code.jumpdests.contains(v)) {
                v.hash(&mut h);
            }
        }
        let visits = f.visits.entry((f.pc, h.finish())).or_insert(0);
        *visits += 1;
        if *visits > self.budget.loop_bound + 1 {
            return false;
        }
        let step = PathStep {
            account: f.code,
            block: f.pc,
        };
        st.blocks += 1;
        st.path.push(step);
        st.blocks <= self.budget.max_blocks_per_path
    }

    /// Leaves the current frame; `success` false rolls back its storage.
    fn halt(&self, st: &mut SymbolicState, success: bool, output: Vec<ByteVal>) -> Flow {
        if st.frames.len() == 1 {
            return Flow::End;
        }
        let done = st.frames.pop().expect("frame");
        if !success {
            st.register = done.snapshot.expect("nested frames keep a snapshot");
        }
        let parent = st.frame();
        let (off, len) = done.ret_area;
        parent.memory.write(off, &output[..len.min(output.len())]);
        parent.returndata = output;
        parent.stack.push(word(success as u64));
        Flow::Next
    }

    fn jump(&self, st: &mut SymbolicState, dest: &T) -> Flow {
        let f = st.frames.last().expect("frame");
        let code = &self.program.accounts[f.code].code;
        if let Some(d) = dest.as_const() {
            return match usize::try_from(d).ok().filter(|d| code.jumpdests.contains(d)) {
                Some(d) => {
                    st.frame().pc = d;
                    Flow::Next
                }
                None => self.halt(st, false, Vec::new()),
            };
        }
        let Some(block) = code.cfg.block_containing(f.pc) else {
            return Flow::Cut;
        };
        let targets: Vec<usize> = code
            .cfg
            .successors(block)
            .filter(|e| e.kind.is_jump_target())
            .map(|e| code.cfg.block(e.target).start_offset)
            .collect();
        if targets.is_empty() {
            return Flow::Cut;
        }
        let children = targets
            .into_iter()
            .map(|t| {
                let mut c = st.clone();
                c.constraints.assume(app(Opcode::EQ, vec![dest.clone(), word(t as u64)]), true);
                c.frame().pc = t;
                c
            })
            .collect();
        Flow::Fork(children)
    }

    fn step(&mut self, st: &mut SymbolicState) -> Flow {
        if !self.enter_block(st) {
            return Flow::Cut;
        }
        let program = self.program;
        let (code_idx, pc) = {
            let f = st.frames.last().expect("frame");
            (f.code, f.pc)
        };
        let code = program.accounts[code_idx].code.clone();
        let Some(ins) = code.instructions.get(&pc) else {
            return self.halt(st, true, Vec::new());
        };
        let op = ins.opcode;
        let next = ins.next_offset();
        if op.is_call() && code_idx == self.entry.account && self.target.pcs.contains(&pc) {
            if st.frames.last().expect("frame").stack.len() < 7 {
                return Flow::End;
            }
            return Flow::Target;
        }
        if op.is_push() {
            st.frame().stack.push(konst(ins.push_value().unwrap_or(U256::ZERO)));
            st.frame().pc = next;
            return self.check_stack(st);
        }
        if let Some(d) = op.dup_depth() {
            let f = st.frame();
            if f.stack.len() < d {
                return self.halt(st, false, Vec::new());
            }
            let v = f.stack[f.stack.len() - d].clone();
            f.stack.push(v);
            st.frame().pc = next;
            return self.check_stack(st);
        }
        if let Some(d) = op.swap_depth() {
            let f = st.frame();
            let len = f.stack.len();
            if len <= d {
                return self.halt(st, false, Vec::new());
            }
            f.stack.swap(len - 1, len - 1 - d);
            f.pc = next;
            return Flow::Next;
        }
        let push = |st: &mut SymbolicState, t: T| st.frame().stack.push(t);
        let inputs = op.stack_inputs();
        if st.frame().stack.len() < inputs {
            return self.halt(st, false, Vec::new());
        }
        let n = st.frame().stack.len();
        let args: Vec<T> = st.frame().stack.drain(n - inputs..).rev().collect();
        st.frame().pc = next;

        if is_pure(op) {
            let all_const = args.iter().all(|a| a.is_const());
            let r = match op {
                Opcode::EXP if !all_const => match args[0].as_const() {
                    Some(b) if b == U256::from(2) => app(Opcode::SHL, vec![args[1].clone(), word(1)]),
                    _ => st.fresh_var("exp", 256),
                },
                Opcode::SIGNEXTEND if !args[0].is_const() => st.fresh_var("sext", 256),
                _ => app(op, args),
            };
            push(st, r);
            return Flow::Next;
        }
        let account = st.frame().account;
        let env = |name: &str, bits: u16| var(name, bits);
        match op {
            Opcode::STOP | Opcode::SELFDESTRUCT => self.halt(st, true, Vec::new()),
            Opcode::JUMPDEST | Opcode::POP => Flow::Next,
            Opcode::INVALID => self.halt(st, false, Vec::new()),
            Opcode::RETURN | Opcode::REVERT => {
                let (Some(off), Some(len)) = (conc(&args[0]), conc(&args[1])) else {
                    return Flow::Cut;
                };
                let out = st.frame().memory.read(off, len);
                self.halt(st, op == Opcode::RETURN, out)
            }
            Opcode::JUMP => self.jump(st, &args[0]),
            Opcode::JUMPI => {
                let (dest, cond) = (&args[0], &args[1]);
                match cond.as_const() {
                    Some(c) if c.is_zero() => Flow::Next,
                    Some(_) => self.jump(st, dest),
                    None => {
                        let block = code.cfg.block_containing(pc).map_or(pc, |b| code.cfg.block(b).start_offset);
                        let mut taken = st.clone();
                        taken.constraints.push(cond.clone(), true, Some((code_idx, block, true)));
                        let mut fall = st.clone();
                        fall.constraints.push(cond.clone(), false, Some((code_idx, block, false)));
                        let taken = match self.jump(&mut taken, dest) {
                            Flow::Next => vec![taken],
                            Flow::Fork(c) => c,
                            Flow::End => Vec::new(),
                            _ => return Flow::Cut,
                        };
                        let dist = |s: &SymbolicState| {
                            let f = s.frames.last().expect("frame");
                            if f.code != self.entry.account {
                                return usize::MAX;
                            }
                            let b = code.cfg.block_containing(f.pc).map(|b| code.cfg.block(b).start_offset);
                            b.and_then(|b| self.distance.get(&b)).copied().unwrap_or(usize::MAX)
                        };
                        let mut children: Vec<SymbolicState> = taken;
                        children.push(fall);
                        // explored last-in first-out: nearest to the target last
                        children.sort_by_key(|c| std::cmp::Reverse(dist(c)));
                        Flow::Fork(children)
                    }
                }
            }
            Opcode::MLOAD => match conc(&args[0]) {
                Some(off) => {
                    let v = st.frame().memory.load(off);
                    push(st, v);
                    Flow::Next
                }
                None => {
                    let v = st.fresh_var("mem", 256);
                    push(st, v);
                    Flow::Next
                }
            },
            Opcode::MSTORE | Opcode::MSTORE8 => {
                let Some(off) = conc(&args[0]) else { return Flow::Cut };
                let f = st.frame();
                if op == Opcode::MSTORE {
                    f.memory.store(off, &args[1]);
                } else {
                    f.memory.store8(off, &args[1]);
                }
                Flow::Next
            }
            Opcode::MSIZE => {
                let s = st.frame().memory.size;
                push(st, word(s as u64));
                Flow::Next
            }
            Opcode::MCOPY => {
                let (Some(dst), Some(src), Some(len)) = (conc(&args[0]), conc(&args[1]), conc(&args[2])) else {
                    return Flow::Cut;
                };
                let f = st.frame();
                let data = f.memory.read(src, len);
                f.memory.write(dst, &data);
                Flow::Next
            }
            Opcode::KECCAK256 => {
                let (Some(off), Some(len)) = (conc(&args[0]), conc(&args[1])) else {
                    return Flow::Cut;
                };
                let bytes = st.frame().memory.read(off, len);
                let h = if let Some(c) = all_const(&bytes) {
                    konst(keccak_bytes(&c))
                } else if len % 32 == 0 {
                    keccak((0..len / 32).map(|i| load_word(&bytes, 32 * i)).collect())
                } else {
                    st.fresh_var("hash", 256)
                };
                push(st, h);
                Flow::Next
            }
            Opcode::SLOAD | Opcode::TLOAD => {
                let key = args[0].clone();
                let v = if op == Opcode::SLOAD {
                    let name = format!("st{account}_{}", st.fresh + 1);
                    let mut made = false;
                    let v = st.register.load(account, &key, &mut || {
                        made = true;
                        var(&name, 256)
                    });
                    st.fresh += made as u32;
                    v
                } else {
                    st.register.transient.get(&(account, key)).cloned().unwrap_or_else(|| word(0))
                };
                push(st, v);
                Flow::Next
            }
            Opcode::SSTORE | Opcode::TSTORE => {
                if st.frame().is_static {
                    return self.halt(st, false, Vec::new());
                }
                if op == Opcode::SSTORE {
                    st.register.store(account, &args[0], args[1].clone());
                } else {
                    st.register.transient.insert((account, args[0].clone()), args[1].clone());
                }
                Flow::Next
            }
            Opcode::ADDRESS => {
                push(st, konst(program.address(account)));
                Flow::Next
            }
            Opcode::CALLER => {
                let v = st.frame().caller.clone();
                push(st, v);
                Flow::Next
            }
            Opcode::CALLVALUE => {
                let v = st.frame().callvalue.clone();
                push(st, v);
                Flow::Next
            }
            Opcode::ORIGIN => {
                push(st, env("origin", 160));
                Flow::Next
            }
            Opcode::SELFBALANCE => {
                push(st, env(&format!("selfbalance{account}"), 256));
                Flow::Next
            }
            Opcode::BALANCE => {
                let v = match args[0].as_const().and_then(|a| program.by_address(a)) {
                    Some(i) => env(&format!("selfbalance{i}"), 256),
                    None => st.fresh_var("balance", 256),
                };
                push(st, v);
                Flow::Next
            }
            Opcode::GASPRICE | Opcode::TIMESTAMP | Opcode::NUMBER | Opcode::PREVRANDAO | Opcode::GASLIMIT
            | Opcode::CHAINID | Opcode::BASEFEE | Opcode::BLOBBASEFEE => {
                push(st, env(&op.name().to_lowercase(), 256));
                Flow::Next
            }
            Opcode::COINBASE => {
                push(st, env("coinbase", 160));
                Flow::Next
            }
            Opcode::BLOCKHASH | Opcode::BLOBHASH | Opcode::EXTCODEHASH => {
                let v = st.fresh_var("env", 256);
                push(st, v);
                Flow::Next
            }
            Opcode::GAS => {
                push(st, word(1 << 40));
                Flow::Next
            }
            Opcode::PC => {
                push(st, word(pc as u64));
                Flow::Next
            }
            Opcode::CALLDATALOAD => {
                let v = match conc(&args[0]) {
                    Some(off) => load_word(&st.frame().calldata, off),
                    None => st.fresh_var("cd", 256),
                };
                push(st, v);
                Flow::Next
            }
            Opcode::CALLDATASIZE => {
                let n = st.frame().calldata.len();
                push(st, word(n as u64));
                Flow::Next
            }
            Opcode::RETURNDATASIZE => {
                let n = st.frame().returndata.len();
                push(st, word(n as u64));
                Flow::Next
            }
            Opcode::CODESIZE => {
                push(st, word(code.bytes.len() as u64));
                Flow::Next
            }
            Opcode::CALLDATACOPY | Opcode::RETURNDATACOPY | Opcode::CODECOPY => {
                let (Some(dst), Some(src), Some(len)) = (conc(&args[0]), conc(&args[1]), conc(&args[2])) else {
                    return Flow::Cut;
                };
                let f = st.frame();
                let data: Vec<ByteVal> = (src..src + len)
                    .map(|k| match op {
                        Opcode::CALLDATACOPY => f.calldata.get(k).cloned(),
                        Opcode::RETURNDATACOPY => f.returndata.get(k).cloned(),
                        _ => code.bytes.get(k).map(|b| ByteVal::Const(*b)),
                    })
                    .map(|b| b.unwrap_or(ByteVal::Const(0)))
                    .collect();
                f.memory.write(dst, &data);
                Flow::Next
            }
            Opcode::EXTCODESIZE => {
                let v = match args[0].as_const().and_then(|a| program.by_address(a)) {
                    Some(i) => word(program.accounts[i].code.bytes.len() as u64),
                    None => st.fresh_var("extsize", 256),
                };
                push(st, v);
                Flow::Next
            }
            Opcode::CREATE | Opcode::CREATE2 => {
                let v = st.fresh_var("created", 160);
                push(st, v);
                Flow::Next
            }
            o if (0xa0..=0xa4).contains(&o.0) => Flow::Next,
            o if o.is_call() => self.call(st, op, pc, args),
            _ => self.halt(st, false, Vec::new()),
        }
    }

    fn check_stack(&self, st: &mut SymbolicState) -> Flow {
        if st.frame().stack.len() > 1024 {
            return self.halt(st, false, Vec::new());
        }
        Flow::Next
    }

    fn call(&mut self, st: &mut SymbolicState, op: Opcode, pc: usize, a: Vec<T>) -> Flow {
        let with_value = matches!(op, Opcode::CALL | Opcode::CALLCODE);
        let (address, value, rest) = if with_value {
            (a[1].clone(), a[2].clone(), &a[3..])
        } else {
            (a[1].clone(), word(0), &a[2..])
        };
        let offs: Option<Vec<usize>> = rest.iter().map(conc).collect();
        let Some(offs) = offs else { return Flow::Cut };
        let input = st.frame().memory.read(offs[0], offs[1]);
        st.frame().memory.read(offs[2], offs[3]);
        let code_idx = st.frames.last().expect("frame").code;
        let callee = match address.as_const() {
            Some(c) => match self.program.by_address(c) {
                Some(i) => Callee::Known(i),
                None => Callee::Symbolic,
            },
            None => match (self.resolve)(code_idx, pc) {
                Some(i) => {
                    let known = konst(self.program.address(i));
                    st.constraints.assume(app(Opcode::EQ, vec![address.clone(), known]), true);
                    Callee::Known(i)
                }
                None => Callee::Symbolic,
            },
        };
        let args = CallArgs {
            op,
            pc,
            address,
            value,
            input,
            ret_area: (offs[2], offs[3]),
        };
        call_context_switch(st, self.program, callee, args, self.budget.max_call_depth);
        Flow::Next
    }
}

pub fn execute(
    program: &Program,
    entry: &Entry,
    target: &Target,
    budget: &Budget,
    backend: &mut dyn Backend,
    resolve: &dyn Fn(usize, usize) -> Option<usize>,
) -> Verdict {
    if target.pcs.is_empty() {
        return Verdict::without_paths(Status::UnknownBudget);
    }
    Engine::new(program, entry, target, budget, backend, resolve).run()
}

pub fn account(name: &str, address: U256, code: Vec<u8>) -> Account {
    Account {
        name: name.to_string(),
        address,
        code: Rc::new(crate::state::Code::new(code)),
    }
}

/// Whether a term mentions a variable in `names`.
pub fn mentions_any(t: &Term, names: &BTreeSet<String>) -> bool {
    t.mentions(&|n| names.contains(n))
}
