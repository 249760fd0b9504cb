//! A deliberately small, unmetered EVM interpreter.
//!
//! It exists to cross-check the analyses: it has its own decoding, word
//! arithmetic and hashing and shares no code with the analysis crates.
//! Gas is not charged; `GAS` returns a large constant and the gas operand of
//! calls is only recorded.
//!
//! Calls are routed through a [`Host`], which can let the callee's code run,
//! stub the result, or re-enter arbitrary accounts before returning, which is
//! how attacker fallbacks are modelled.

use std::collections::BTreeMap;

pub use ruint::aliases::U256;
pub mod gen;

use tiny_keccak::{Hasher, Keccak};

pub fn keccak(data: &[u8]) -> [u8; 32] {
    let mut k = Keccak::v256();
    k.update(data);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    out
}

pub fn word(x: u64) -> U256 {
    U256::from(x)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub code: Vec<u8>,
    pub storage: BTreeMap<U256, U256>,
    pub balance: U256,
    /// Reported as a contract by EXTCODESIZE even without code.
    pub is_contract: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct World {
    pub accounts: BTreeMap<U256, Account>,
}

impl World {
    pub fn account(&self, address: U256) -> Option<&Account> {
        self.accounts.get(&address)
    }

    pub fn account_mut(&mut self, address: U256) -> &mut Account {
        self.accounts.entry(address).or_default()
    }

    pub fn deploy(&mut self, address: U256, code: Vec<u8>) {
        let acc = self.account_mut(address);
        acc.code = code;
        acc.is_contract = true;
    }

    pub fn sload(&self, address: U256, key: U256) -> U256 {
        self.account(address)
            .and_then(|a| a.storage.get(&key).copied())
            .unwrap_or(U256::ZERO)
    }

    pub fn sstore(&mut self, address: U256, key: U256, value: U256) {
        let acc = self.account_mut(address);
        if value == U256::ZERO {
            acc.storage.remove(&key);
        } else {
            acc.storage.insert(key, value);
        }
    }

    pub fn balance(&self, address: U256) -> U256 {
        self.account(address).map_or(U256::ZERO, |a| a.balance)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub caller: U256,
    pub to: U256,
    pub value: U256,
    pub data: Vec<u8>,
}

impl Message {
    pub fn new(caller: U256, to: U256, data: Vec<u8>) -> Self {
        Message {
            caller,
            to,
            value: U256::ZERO,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallKind {
    Call,
    DelegateCall,
    StaticCall,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallEvent {
    pub depth: usize,
    pub pc: usize,
    pub from: U256,
    pub to: U256,
    pub value: U256,
    pub gas: U256,
    pub input: Vec<u8>,
    pub kind: CallKind,
}

pub enum CallAction {
    /// Run the callee's code, or succeed with no output if it has none.
    Execute,
    Return { success: bool, data: Vec<u8> },
    /// Run these messages (in order, as top-level-like calls nested at this
    /// point), then return.
    ReEnter {
        messages: Vec<Message>,
        success: bool,
        data: Vec<u8>,
    },
}

pub trait Host {
    fn on_call(&mut self, event: &CallEvent, world: &World) -> CallAction;
}

/// Executes code where there is any; calls to code-less accounts succeed.
pub struct DefaultHost;

impl Host for DefaultHost {
    fn on_call(&mut self, _event: &CallEvent, _world: &World) -> CallAction {
        CallAction::Execute
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub address: U256,
    pub depth: usize,
    /// Start offset of the block being left.
    pub from: usize,
    /// Start offset of the block being entered.
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreEvent {
    pub depth: usize,
    pub address: U256,
    pub pc: usize,
    pub key: U256,
    pub value: U256,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub transitions: Vec<Transition>,
    pub calls: Vec<CallEvent>,
    pub stores: Vec<StoreEvent>,
    /// Results of messages injected by `CallAction::ReEnter`, in order.
    pub reentries: Vec<Outcome>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Halt {
    Stop,
    Return,
    Revert,
    Invalid(u8),
    StackUnderflow,
    StackOverflow,
    BadJump(usize),
    StepLimit,
    DepthLimit,
    StaticViolation,
    Unsupported(u8),
    OutOfMemory,
    InsufficientBalance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub success: bool,
    pub halt: Halt,
    pub output: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Limits {
    pub max_steps: usize,
    pub max_depth: usize,
    pub max_memory: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 1_000_000,
            max_depth: 64,
            max_memory: 1 << 20,
        }
    }
}

/// Runs `msg` against `world`, committing state only on success.
pub fn run(world: &mut World, msg: &Message, host: &mut dyn Host) -> (Outcome, Trace) {
    run_with(world, msg, host, &Limits::default())
}

pub fn run_with(world: &mut World, msg: &Message, host: &mut dyn Host, limits: &Limits) -> (Outcome, Trace) {
    let mut vm = Vm {
        world,
        host,
        limits,
        trace: Trace::default(),
    };
    let out = vm.message(msg, 0, false, true);
    (out, vm.trace)
}

struct Vm<'a> {
    world: &'a mut World,
    host: &'a mut dyn Host,
    limits: &'a Limits,
    trace: Trace,
}

struct Frame {
    address: U256,
    code_address: U256,
    caller: U256,
    value: U256,
    data: Vec<u8>,
    is_static: bool,
    depth: usize,
}

fn fail(halt: Halt) -> Outcome {
    Outcome {
        success: false,
        halt,
        output: Vec::new(),
    }
}

fn from_bool(b: bool) -> U256 {
    if b {
        U256::from(1u8)
    } else {
        U256::ZERO
    }
}

fn low_usize(x: U256) -> Option<usize> {
    if x > U256::from(u32::MAX) {
        None
    } else {
        Some(x.as_limbs()[0] as usize)
    }
}

fn signed_parts(x: U256) -> (bool, U256) {
    if x.bit(255) {
        (true, (!x).wrapping_add(U256::from(1u8)))
    } else {
        (false, x)
    }
}

fn apply_sign(neg: bool, x: U256) -> U256 {
    if neg {
        (!x).wrapping_add(U256::from(1u8))
    } else {
        x
    }
}

fn is_jumpdest(code: &[u8], target: usize) -> bool {
    // walk from the start so PUSH data is never mistaken for a JUMPDEST
    let mut pc = 0;
    while pc < code.len() {
        if pc == target {
            return code[pc] == 0x5b;
        }
        let op = code[pc];
        pc += if (0x60..=0x7f).contains(&op) {
            (op - 0x5e) as usize
        } else {
            1
        };
    }
    false
}

impl Vm<'_> {
    fn message(&mut self, msg: &Message, depth: usize, is_static: bool, top_level: bool) -> Outcome {
        if depth > self.limits.max_depth {
            return fail(Halt::DepthLimit);
        }
        let snapshot = self.world.clone();
        if !msg.value.is_zero() {
            if top_level {
                let acc = self.world.account_mut(msg.caller);
                acc.balance = acc.balance.saturating_add(msg.value);
            }
            if self.world.balance(msg.caller) < msg.value {
                return fail(Halt::InsufficientBalance);
            }
            self.world.account_mut(msg.caller).balance -= msg.value;
            let to = self.world.account_mut(msg.to);
            to.balance = to.balance.saturating_add(msg.value);
        }
        let frame = Frame {
            address: msg.to,
            code_address: msg.to,
            caller: msg.caller,
            value: msg.value,
            data: msg.data.clone(),
            is_static,
            depth,
        };
        let out = self.execute(&frame);
        if !out.success {
            *self.world = snapshot;
        }
        out
    }

    fn execute(&mut self, f: &Frame) -> Outcome {
        let code = self
            .world
            .account(f.code_address)
            .map(|a| a.code.clone())
            .unwrap_or_default();
        let mut stack: Vec<U256> = Vec::new();
        let mut mem: Vec<u8> = Vec::new();
        let mut returndata: Vec<u8> = Vec::new();
        let mut pc = 0usize;
        let mut block_start = 0usize;

        macro_rules! pop {
            () => {
                match stack.pop() {
                    Some(v) => v,
                    None => return fail(Halt::StackUnderflow),
                }
            };
        }
        macro_rules! push {
            ($v:expr) => {{
                let v = $v;
                if stack.len() >= 1024 {
                    return fail(Halt::StackOverflow);
                }
                stack.push(v);
            }};
        }
        macro_rules! mem_range {
            ($off:expr, $len:expr) => {{
                let off = $off;
                let len = $len;
                if len.is_zero() {
                    (0usize, 0usize)
                } else {
                    let (Some(o), Some(l)) = (low_usize(off), low_usize(len)) else {
                        return fail(Halt::OutOfMemory);
                    };
                    let end = o + l;
                    if end > self.limits.max_memory {
                        return fail(Halt::OutOfMemory);
                    }
                    let words = end.div_ceil(32) * 32;
                    if mem.len() < words {
                        mem.resize(words, 0);
                    }
                    (o, l)
                }
            }};
        }
        macro_rules! transition {
            ($to:expr) => {{
                let to = $to;
                self.trace.transitions.push(Transition {
                    address: f.code_address,
                    depth: f.depth,
                    from: block_start,
                    to,
                });
                block_start = to;
            }};
        }

        loop {
            if self.trace.steps >= self.limits.max_steps {
                return fail(Halt::StepLimit);
            }
            self.trace.steps += 1;
            let op = code.get(pc).copied().unwrap_or(0x00);
            if op == 0x5b && pc != block_start {
                transition!(pc);
            }
            let mut next = pc + 1;
            match op {
                0x00 => {
                    return Outcome {
                        success: true,
                        halt: Halt::Stop,
                        output: Vec::new(),
                    }
                }
                0x01 => {
                    let (a, b) = (pop!(), pop!());
                    push!(a.wrapping_add(b))
                }
                0x02 => {
                    let (a, b) = (pop!(), pop!());
                    push!(a.wrapping_mul(b))
                }
                0x03 => {
                    let (a, b) = (pop!(), pop!());
                    push!(a.wrapping_sub(b))
                }
                0x04 => {
                    let (a, b) = (pop!(), pop!());
                    push!(if b.is_zero() { U256::ZERO } else { a / b })
                }
                0x05 => {
                    let (a, b) = (pop!(), pop!());
                    if b.is_zero() {
                        push!(U256::ZERO)
                    } else {
                        let (na, ma) = signed_parts(a);
                        let (nb, mb) = signed_parts(b);
                        push!(apply_sign(na ^ nb, ma / mb))
                    }
                }
                0x06 => {
                    let (a, b) = (pop!(), pop!());
                    push!(if b.is_zero() { U256::ZERO } else { a % b })
                }
                0x07 => {
                    let (a, b) = (pop!(), pop!());
                    if b.is_zero() {
                        push!(U256::ZERO)
                    } else {
                        let (na, ma) = signed_parts(a);
                        let (_, mb) = signed_parts(b);
                        push!(apply_sign(na, ma % mb))
                    }
                }
                0x08 => {
                    let (a, b, n) = (pop!(), pop!(), pop!());
                    push!(if n.is_zero() { U256::ZERO } else { a.add_mod(b, n) })
                }
                0x09 => {
                    let (a, b, n) = (pop!(), pop!(), pop!());
                    push!(if n.is_zero() { U256::ZERO } else { a.mul_mod(b, n) })
                }
                0x0a => {
                    let (base, exp) = (pop!(), pop!());
                    // square and multiply
                    let mut result = U256::from(1u8);
                    let mut b = base;
                    for i in 0..256 {
                        if exp.bit(i) {
                            result = result.wrapping_mul(b);
                        }
                        b = b.wrapping_mul(b);
                    }
                    push!(result)
                }
                0x0b => {
                    let (k, x) = (pop!(), pop!());
                    match low_usize(k) {
                        Some(k) if k < 31 => {
                            let sign_bit = k * 8 + 7;
                            let mut bytes = x.to_be_bytes::<32>();
                            let fill = if x.bit(sign_bit) { 0xff } else { 0x00 };
                            for b in bytes.iter_mut().take(31 - k) {
                                *b = fill;
                            }
                            push!(U256::from_be_bytes(bytes))
                        }
                        _ => push!(x),
                    }
                }
                0x10 => {
                    let (a, b) = (pop!(), pop!());
                    push!(from_bool(a < b))
                }
                0x11 => {
                    let (a, b) = (pop!(), pop!());
                    push!(from_bool(a > b))
                }
                0x12 | 0x13 => {
                    let (a, b) = (pop!(), pop!());
                    // flipping the sign bit maps signed order onto unsigned order
                    let flip = U256::from(1u8) << 255;
                    let (x, y) = (a ^ flip, b ^ flip);
                    push!(from_bool(if op == 0x12 { x < y } else { x > y }))
                }
                0x14 => {
                    let (a, b) = (pop!(), pop!());
                    push!(from_bool(a == b))
                }
                0x15 => {
                    let a = pop!();
                    push!(from_bool(a.is_zero()))
                }
                0x16 => {
                    let (a, b) = (pop!(), pop!());
                    push!(a & b)
                }
                0x17 => {
                    let (a, b) = (pop!(), pop!());
                    push!(a | b)
                }
                0x18 => {
                    let (a, b) = (pop!(), pop!());
                    push!(a ^ b)
                }
                0x19 => {
                    let a = pop!();
                    push!(!a)
                }
                0x1a => {
                    let (i, x) = (pop!(), pop!());
                    push!(match low_usize(i) {
                        Some(i) if i < 32 => U256::from(x.to_be_bytes::<32>()[i]),
                        _ => U256::ZERO,
                    })
                }
                0x1b => {
                    let (s, x) = (pop!(), pop!());
                    push!(match low_usize(s) {
                        Some(s) if s < 256 => x << s,
                        _ => U256::ZERO,
                    })
                }
                0x1c => {
                    let (s, x) = (pop!(), pop!());
                    push!(match low_usize(s) {
                        Some(s) if s < 256 => x >> s,
                        _ => U256::ZERO,
                    })
                }
                0x1d => {
                    let (s, x) = (pop!(), pop!());
                    let neg = x.bit(255);
                    push!(match low_usize(s) {
                        Some(s) if s < 256 => {
                            let shifted = x >> s;
                            if neg && s > 0 {
                                shifted | !(U256::MAX >> s)
                            } else {
                                shifted
                            }
                        }
                        _ => {
                            if neg {
                                U256::MAX
                            } else {
                                U256::ZERO
                            }
                        }
                    })
                }
                0x20 => {
                    let (off, len) = (pop!(), pop!());
                    let (o, l) = mem_range!(off, len);
                    push!(U256::from_be_bytes(keccak(&mem[o..o + l])))
                }
                0x30 => push!(f.address),
                0x31 => {
                    let a = pop!();
                    push!(self.world.balance(a))
                }
                0x32 => push!(U256::ZERO),
                0x33 => push!(f.caller),
                0x34 => push!(f.value),
                0x35 => {
                    let off = pop!();
                    let mut buf = [0u8; 32];
                    if let Some(o) = low_usize(off) {
                        for (i, b) in buf.iter_mut().enumerate() {
                            *b = f.data.get(o + i).copied().unwrap_or(0);
                        }
                    }
                    push!(U256::from_be_bytes(buf))
                }
                0x36 => push!(U256::from(f.data.len())),
                0x37 | 0x39 | 0x3e => {
                    let (dst, src, len) = (pop!(), pop!(), pop!());
                    let source: &[u8] = match op {
                        0x37 => &f.data,
                        0x39 => &code,
                        _ => &returndata,
                    };
                    if op == 0x3e {
                        let end = low_usize(src).zip(low_usize(len)).map(|(s, l)| s + l);
                        if end.is_none_or(|e| e > returndata.len()) {
                            return fail(Halt::Invalid(op));
                        }
                    }
                    let (d, l) = mem_range!(dst, len);
                    let s = low_usize(src).unwrap_or(usize::MAX);
                    for i in 0..l {
                        mem[d + i] = s.checked_add(i).and_then(|k| source.get(k)).copied().unwrap_or(0);
                    }
                }
                0x38 => push!(U256::from(code.len())),
                0x3a => push!(U256::ZERO),
                0x3b => {
                    let a = pop!();
                    let size = self.world.account(a).map_or(0, |acc| {
                        if acc.code.is_empty() && acc.is_contract {
                            1
                        } else {
                            acc.code.len()
                        }
                    });
                    push!(U256::from(size))
                }
                0x3c => return fail(Halt::Unsupported(op)),
                0x3d => push!(U256::from(returndata.len())),
                0x3f => {
                    let a = pop!();
                    let h = self
                        .world
                        .account(a)
                        .map_or(U256::ZERO, |acc| U256::from_be_bytes(keccak(&acc.code)));
                    push!(h)
                }
                0x40 => {
                    pop!();
                    push!(U256::ZERO)
                }
                0x41 | 0x44 | 0x48 | 0x4a => push!(U256::ZERO),
                0x42 | 0x43 | 0x46 => push!(U256::from(1u8)),
                0x45 => push!(U256::from(30_000_000u64)),
                0x47 => push!(self.world.balance(f.address)),
                0x49 => {
                    pop!();
                    push!(U256::ZERO)
                }
                0x50 => {
                    pop!();
                }
                0x51 => {
                    let off = pop!();
                    let (o, _) = mem_range!(off, U256::from(32u8));
                    let mut buf = [0u8; 32];
                    buf.copy_from_slice(&mem[o..o + 32]);
                    push!(U256::from_be_bytes(buf))
                }
                0x52 => {
                    let (off, v) = (pop!(), pop!());
                    let (o, _) = mem_range!(off, U256::from(32u8));
                    mem[o..o + 32].copy_from_slice(&v.to_be_bytes::<32>());
                }
                0x53 => {
                    let (off, v) = (pop!(), pop!());
                    let (o, _) = mem_range!(off, U256::from(1u8));
                    mem[o] = v.to_be_bytes::<32>()[31];
                }
                0x54 => {
                    let k = pop!();
                    push!(self.world.sload(f.address, k))
                }
                0x55 => {
                    if f.is_static {
                        return fail(Halt::StaticViolation);
                    }
                    let (k, v) = (pop!(), pop!());
                    self.trace.stores.push(StoreEvent {
                        depth: f.depth,
                        address: f.address,
                        pc,
                        key: k,
                        value: v,
                    });
                    self.world.sstore(f.address, k, v);
                }
                0x56 | 0x57 => {
                    let target = pop!();
                    let taken = if op == 0x57 { !pop!().is_zero() } else { true };
                    if taken {
                        let Some(t) = low_usize(target).filter(|t| is_jumpdest(&code, *t)) else {
                            return fail(Halt::BadJump(pc));
                        };
                        transition!(t);
                        next = t;
                    } else {
                        transition!(pc + 1);
                    }
                }
                0x58 => push!(U256::from(pc)),
                0x59 => push!(U256::from(mem.len())),
                0x5a => push!(U256::from(1_000_000_000u64)),
                0x5b => {}
                0x5c | 0x5d => return fail(Halt::Unsupported(op)),
                0x5e => {
                    let (dst, src, len) = (pop!(), pop!(), pop!());
                    let (s, l) = mem_range!(src, len);
                    let (d, _) = mem_range!(dst, len);
                    let tmp = mem[s..s + l].to_vec();
                    mem[d..d + l].copy_from_slice(&tmp);
                }
                0x5f..=0x7f => {
                    let n = (op - 0x5f) as usize;
                    let mut buf = [0u8; 32];
                    for i in 0..n {
                        buf[32 - n + i] = code.get(pc + 1 + i).copied().unwrap_or(0);
                    }
                    push!(U256::from_be_bytes(buf));
                    next = pc + 1 + n;
                }
                0x80..=0x8f => {
                    let n = (op - 0x7f) as usize;
                    if stack.len() < n {
                        return fail(Halt::StackUnderflow);
                    }
                    push!(stack[stack.len() - n])
                }
                0x90..=0x9f => {
                    let n = (op - 0x8f) as usize;
                    if stack.len() < n + 1 {
                        return fail(Halt::StackUnderflow);
                    }
                    let top = stack.len() - 1;
                    stack.swap(top, top - n);
                }
                0xa0..=0xa4 => {
                    if f.is_static {
                        return fail(Halt::StaticViolation);
                    }
                    let topics = (op - 0xa0) as usize;
                    let (off, len) = (pop!(), pop!());
                    mem_range!(off, len);
                    for _ in 0..topics {
                        pop!();
                    }
                }
                0xf1 | 0xf4 | 0xfa => {
                    let gas = pop!();
                    let to = pop!();
                    let value = if op == 0xf1 { pop!() } else { U256::ZERO };
                    let (ao, al, ro, rl) = (pop!(), pop!(), pop!(), pop!());
                    if f.is_static && !value.is_zero() {
                        return fail(Halt::StaticViolation);
                    }
                    let (a, l) = mem_range!(ao, al);
                    let input = mem[a..a + l].to_vec();
                    let (r, rlen) = mem_range!(ro, rl);
                    let kind = match op {
                        0xf1 => CallKind::Call,
                        0xf4 => CallKind::DelegateCall,
                        _ => CallKind::StaticCall,
                    };
                    let event = CallEvent {
                        depth: f.depth,
                        pc,
                        from: f.address,
                        to,
                        value,
                        gas,
                        input: input.clone(),
                        kind,
                    };
                    self.trace.calls.push(event.clone());
                    let out = self.call(f, &event);
                    returndata = out.output;
                    let n = rlen.min(returndata.len());
                    mem[r..r + n].copy_from_slice(&returndata[..n]);
                    push!(from_bool(out.success))
                }
                0xf3 | 0xfd => {
                    let (off, len) = (pop!(), pop!());
                    let (o, l) = mem_range!(off, len);
                    let output = mem[o..o + l].to_vec();
                    return Outcome {
                        success: op == 0xf3,
                        halt: if op == 0xf3 { Halt::Return } else { Halt::Revert },
                        output,
                    };
                }
                0xff => {
                    if f.is_static {
                        return fail(Halt::StaticViolation);
                    }
                    let beneficiary = pop!();
                    let bal = self.world.balance(f.address);
                    self.world.account_mut(f.address).balance = U256::ZERO;
                    let b = self.world.account_mut(beneficiary);
                    b.balance = b.balance.saturating_add(bal);
                    return Outcome {
                        success: true,
                        halt: Halt::Stop,
                        output: Vec::new(),
                    };
                }
                0xf0 | 0xf2 | 0xf5 => return fail(Halt::Unsupported(op)),
                _ => return fail(Halt::Invalid(op)),
            }
            pc = next;
        }
    }

    fn call(&mut self, f: &Frame, event: &CallEvent) -> Outcome {
        let depth = f.depth + 1;
        if depth > self.limits.max_depth {
            return fail(Halt::DepthLimit);
        }
        let action = self.host.on_call(event, self.world);
        match action {
            CallAction::Execute => match event.kind {
                CallKind::DelegateCall => {
                    let snapshot = self.world.clone();
                    let frame = Frame {
                        address: f.address,
                        code_address: event.to,
                        caller: f.caller,
                        value: f.value,
                        data: event.input.clone(),
                        is_static: f.is_static,
                        depth,
                    };
                    let out = self.execute(&frame);
                    if !out.success {
                        *self.world = snapshot;
                    }
                    out
                }
                _ => {
                    let msg = Message {
                        caller: f.address,
                        to: event.to,
                        value: event.value,
                        data: event.input.clone(),
                    };
                    let is_static = f.is_static || event.kind == CallKind::StaticCall;
                    self.message(&msg, depth, is_static, false)
                }
            },
            CallAction::Return { success, data } => {
                if success && !event.value.is_zero() {
                    if self.world.balance(f.address) < event.value {
                        return fail(Halt::InsufficientBalance);
                    }
                    self.world.account_mut(f.address).balance -= event.value;
                    let to = self.world.account_mut(event.to);
                    to.balance = to.balance.saturating_add(event.value);
                }
                Outcome {
                    success,
                    halt: Halt::Return,
                    output: data,
                }
            }
            CallAction::ReEnter {
                messages,
                success,
                data,
            } => {
                let snapshot = self.world.clone();
                if !event.value.is_zero() {
                    if self.world.balance(f.address) < event.value {
                        return fail(Halt::InsufficientBalance);
                    }
                    self.world.account_mut(f.address).balance -= event.value;
                    let to = self.world.account_mut(event.to);
                    to.balance = to.balance.saturating_add(event.value);
                }
                for m in &messages {
                    let out = self.message(m, depth + 1, f.is_static, false);
                    self.trace.reentries.push(out);
                }
                if !success {
                    *self.world = snapshot;
                }
                Outcome {
                    success,
                    halt: Halt::Return,
                    output: data,
                }
            }
        }
    }
}

/// ABI helpers for building calldata in tests.
pub mod abi {
    use super::*;

    pub fn selector(signature: &str) -> [u8; 4] {
        let h = keccak(signature.as_bytes());
        [h[0], h[1], h[2], h[3]]
    }

    pub fn encode_call(signature: &str, args: &[U256]) -> Vec<u8> {
        let mut out = selector(signature).to_vec();
        for a in args {
            out.extend_from_slice(&a.to_be_bytes::<32>());
        }
        out
    }

    /// Storage slot of `mapping[key]` declared at `slot`.
    pub fn mapping_slot(key: U256, slot: U256) -> U256 {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(&key.to_be_bytes::<32>());
        buf.extend_from_slice(&slot.to_be_bytes::<32>());
        U256::from_be_bytes(keccak(&buf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(code: Vec<u8>, data: Vec<u8>) -> (Outcome, Trace, World) {
        let mut world = World::default();
        let me = word(0x1000);
        world.deploy(me, code);
        let (out, trace) = run(&mut world, &Message::new(word(0xaa), me, data), &mut DefaultHost);
        (out, trace, world)
    }

    /// Returns the top of stack by appending MSTORE/RETURN.
    fn top_of(mut code: Vec<u8>) -> U256 {
        code.extend_from_slice(&[0x60, 0x00, 0x52, 0x60, 0x20, 0x60, 0x00, 0xf3]);
        let (out, _, _) = exec(code, vec![]);
        assert!(out.success, "{out:?}");
        U256::from_be_slice(&out.output)
    }

    #[test]
    fn keccak_empty() {
        assert_eq!(
            keccak(b""),
            [
                0xc5, 0xd2, 0x46, 0x01, 0x86, 0xf7, 0x23, 0x3c, 0x92, 0x7e, 0x7d, 0xb2, 0xdc, 0xc7,
                0x03, 0xc0, 0xe5, 0x00, 0xb6, 0x53, 0xca, 0x82, 0x27, 0x3b, 0x7b, 0xfa, 0xd8, 0x04,
                0x5d, 0x85, 0xa4, 0x70
            ]
        );
        assert_eq!(abi::selector("transfer(address,uint256)"), [0xa9, 0x05, 0x9c, 0xbb]);
    }

    #[test]
    fn arithmetic() {
        assert_eq!(top_of(vec![0x60, 0x03, 0x60, 0x02, 0x01]), word(5));
        assert_eq!(top_of(vec![0x60, 0x03, 0x60, 0x05, 0x03]), word(2));
        assert_eq!(top_of(vec![0x60, 0x05, 0x60, 0x03, 0x03]), U256::MAX - word(1));
        assert_eq!(top_of(vec![0x60, 0x03, 0x60, 0x02, 0x0a]), word(8));
        // -4 / 2 == -2
        assert_eq!(
            top_of(vec![0x60, 0x02, 0x60, 0x04, 0x60, 0x00, 0x03, 0x05]),
            U256::ZERO - word(2)
        );
        // SLT(-1, 0) == 1
        assert_eq!(top_of(vec![0x60, 0x00, 0x60, 0x01, 0x60, 0x00, 0x03, 0x12]), word(1));
        // SAR(4, -16) == -1
        assert_eq!(
            top_of(vec![0x60, 0x10, 0x60, 0x00, 0x03, 0x60, 0x04, 0x1d]),
            U256::ZERO - word(1)
        );
        assert_eq!(top_of(vec![0x60, 0xff, 0x60, 0x00, 0x0b]), U256::MAX);
    }

    #[test]
    fn jumps_record_transitions() {
        // 0: PUSH1 1, PUSH1 8, JUMPI ; 5: STOP ; ... 8: JUMPDEST STOP
        let code = vec![0x60, 0x01, 0x60, 0x08, 0x57, 0x00, 0x00, 0x00, 0x5b, 0x00];
        let (out, trace, _) = exec(code, vec![]);
        assert!(out.success);
        assert_eq!(trace.transitions.len(), 1);
        assert_eq!((trace.transitions[0].from, trace.transitions[0].to), (0, 8));
    }

    #[test]
    fn push_data_is_not_a_jumpdest() {
        // PUSH1 0x5b sits at offset 3; jumping into it fails
        let code = vec![0x60, 0x04, 0x56, 0x60, 0x5b, 0x00];
        let (out, _, _) = exec(code, vec![]);
        assert_eq!(out.halt, Halt::BadJump(2));
    }

    #[test]
    fn storage_and_revert() {
        // SSTORE(0, 7) then REVERT
        let code = vec![0x60, 0x07, 0x60, 0x00, 0x55, 0x60, 0x00, 0x60, 0x00, 0xfd];
        let (out, trace, world) = exec(code, vec![]);
        assert!(!out.success);
        assert_eq!(trace.stores.len(), 1);
        assert_eq!(world.sload(word(0x1000), U256::ZERO), U256::ZERO);
    }

    struct Reenter(Vec<Message>);

    impl Host for Reenter {
        fn on_call(&mut self, event: &CallEvent, _world: &World) -> CallAction {
            if event.to == word(0xbad) {
                CallAction::ReEnter {
                    messages: std::mem::take(&mut self.0),
                    success: true,
                    data: vec![],
                }
            } else {
                CallAction::Execute
            }
        }
    }

    #[test]
    fn reentry_hook_runs_nested_message() {
        // counter = sload(0) + 1; sstore(0, counter); if counter < 2: call(0xbad)
        let code = vec![
            0x60, 0x00, 0x54, 0x60, 0x01, 0x01, // counter
            0x80, 0x60, 0x00, 0x55, // store
            0x60, 0x02, 0x11, // 2 > counter
            0x60, 0x14, 0x57, // jumpi 0x14
            0x00, 0x00, 0x00, 0x00, // pad to 0x14
            0x5b, 0x60, 0x00, 0x80, 0x80, 0x80, 0x80, 0x61, 0x0b, 0xad, 0x5a, 0xf1, 0x00,
        ];
        let mut world = World::default();
        let me = word(0x1000);
        world.deploy(me, code);
        let mut host = Reenter(vec![Message::new(word(0xbad), me, vec![])]);
        let (out, trace) = run(&mut world, &Message::new(word(0xaa), me, vec![]), &mut host);
        assert!(out.success, "{out:?}");
        assert_eq!(trace.reentries.len(), 1);
        assert_eq!(world.sload(me, U256::ZERO), word(2));
        assert_eq!(trace.calls.len(), 1);
    }
}
