//! Generator for dispatcher-style bytecode and a coverage grid for it.
//!
//! Programs look like compiler output at the control-flow level: a selector
//! dispatcher with push-jumps, public entry stubs that call internal
//! functions, internal functions that return through an orphan jump to a
//! return address passed on the stack, nested calls and branches on the
//! argument. Every block is reachable and every branch arm is taken by some
//! input of [`input_grid`].

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{keccak, run, DefaultHost, Message, World, U256};

#[derive(Clone, Debug)]
enum Item {
    Op(u8),
    Push1(u8),
    Push4([u8; 4]),
    PushLabel(usize),
    Label(usize),
}

/// Two-pass assembler with 2-byte label pushes.
#[derive(Default)]
pub struct Assembler {
    items: Vec<Item>,
    labels: usize,
}

impl Assembler {
    pub fn label(&mut self) -> usize {
        self.labels += 1;
        self.labels - 1
    }

    pub fn op(&mut self, op: u8) -> &mut Self {
        self.items.push(Item::Op(op));
        self
    }

    pub fn push1(&mut self, v: u8) -> &mut Self {
        self.items.push(Item::Push1(v));
        self
    }

    pub fn push4(&mut self, v: [u8; 4]) -> &mut Self {
        self.items.push(Item::Push4(v));
        self
    }

    pub fn push_label(&mut self, l: usize) -> &mut Self {
        self.items.push(Item::PushLabel(l));
        self
    }

    /// Places a label followed by a JUMPDEST.
    pub fn place(&mut self, l: usize) -> &mut Self {
        self.items.push(Item::Label(l));
        self.items.push(Item::Op(0x5b));
        self
    }

    pub fn assemble(&self) -> Vec<u8> {
        let mut at = BTreeMap::new();
        let mut pc = 0usize;
        for it in &self.items {
            match it {
                Item::Op(_) => pc += 1,
                Item::Push1(_) => pc += 2,
                Item::Push4(_) => pc += 5,
                Item::PushLabel(_) => pc += 3,
                Item::Label(l) => {
                    at.insert(*l, pc);
                }
            }
        }
        let mut out = Vec::with_capacity(pc);
        for it in &self.items {
            match it {
                Item::Op(o) => out.push(*o),
                Item::Push1(v) => out.extend_from_slice(&[0x60, *v]),
                Item::Push4(v) => {
                    out.push(0x63);
                    out.extend_from_slice(v);
                }
                Item::PushLabel(l) => {
                    let t = at[l];
                    out.extend_from_slice(&[0x61, (t >> 8) as u8, t as u8]);
                }
                Item::Label(_) => {}
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Program {
    pub code: Vec<u8>,
    pub selectors: Vec<[u8; 4]>,
    /// Constants the argument is compared against.
    pub thresholds: BTreeSet<u8>,
}

struct Func {
    label: usize,
    branch: Option<(u8, u8, u8)>,
    calls: Vec<usize>,
    addend: u8,
}

const ADD: u8 = 0x01;
const XOR: u8 = 0x18;
const GT: u8 = 0x11;
const LT: u8 = 0x10;
const EQ: u8 = 0x14;
const SHR: u8 = 0x1c;
const DUP1: u8 = 0x80;
const DUP2: u8 = 0x81;
const SWAP1: u8 = 0x90;
const POP: u8 = 0x50;
const JUMP: u8 = 0x56;
const JUMPI: u8 = 0x57;
const CALLDATALOAD: u8 = 0x35;
const CALLDATASIZE: u8 = 0x36;
const MSTORE: u8 = 0x52;
const RETURN: u8 = 0xf3;
const REVERT: u8 = 0xfd;

/// Builds one pseudo-random dispatcher program.
pub fn dispatcher_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut asm = Assembler::default();
    let n_funcs = rng.gen_range(2..=5);
    let funcs: Vec<Func> = (0..n_funcs)
        .map(|k| {
            let n_calls = if k + 1 < n_funcs { rng.gen_range(0..=2) } else { 0 };
            Func {
                label: asm.label(),
                branch: rng
                    .gen_bool(0.6)
                    .then(|| (rng.gen_range(1..250), rng.gen(), rng.gen())),
                calls: (0..n_calls).map(|_| rng.gen_range(k + 1..n_funcs)).collect(),
                addend: rng.gen(),
            }
        })
        .collect();
    // every internal function gets its own entry, plus a few extra callers
    let n_entries = n_funcs + rng.gen_range(0..=2);
    let targets: Vec<usize> = (0..n_entries)
        .map(|i| if i < n_funcs { i } else { rng.gen_range(0..n_funcs) })
        .collect();
    let selectors: Vec<[u8; 4]> = (0..n_entries)
        .map(|i| {
            let h = keccak(format!("f{seed}_{i}(uint256)").as_bytes());
            [h[0], h[1], h[2], h[3]]
        })
        .collect();

    let fallback = asm.label();
    let entries: Vec<usize> = (0..n_entries).map(|_| asm.label()).collect();
    let returns: Vec<usize> = (0..n_entries).map(|_| asm.label()).collect();

    // dispatcher
    asm.push1(4).op(CALLDATASIZE).op(LT).push_label(fallback).op(JUMPI);
    asm.push1(0).op(CALLDATALOAD).push1(0xe0).op(SHR);
    for (sel, entry) in selectors.iter().zip(&entries) {
        asm.op(DUP1).push4(*sel).op(EQ).push_label(*entry).op(JUMPI);
    }
    asm.place(fallback);
    asm.push1(0).op(DUP1).op(REVERT);

    // public entries: call the internal function, return its result
    for i in 0..n_entries {
        asm.place(entries[i]);
        asm.push_label(returns[i])
            .push1(4)
            .op(CALLDATALOAD)
            .push_label(funcs[targets[i]].label)
            .op(JUMP);
        asm.place(returns[i]);
        asm.push1(0).op(MSTORE).push1(0x20).push1(0).op(RETURN);
    }

    // internal functions: stack on entry is [.., ret, arg]
    let mut thresholds = BTreeSet::new();
    for f in &funcs {
        asm.place(f.label);
        for &callee in &f.calls {
            let cont = asm.label();
            asm.push_label(cont)
                .op(DUP2)
                .push_label(funcs[callee].label)
                .op(JUMP);
            asm.place(cont);
            // [ret, arg, r]: drop the result, branches below test the argument
            asm.op(POP);
        }
        if let Some((c, x, y)) = f.branch {
            thresholds.insert(c);
            let then = asm.label();
            let join = asm.label();
            asm.op(DUP1).push1(c).op(GT).push_label(then).op(JUMPI);
            asm.push1(x).op(ADD).push_label(join).op(JUMP);
            asm.place(then);
            asm.push1(y).op(XOR);
            asm.place(join);
        } else {
            asm.push1(f.addend).op(ADD);
        }
        asm.op(SWAP1).op(JUMP);
    }
    Program {
        code: asm.assemble(),
        selectors,
        thresholds,
    }
}

/// Calldata inputs that together exercise every block and branch.
pub fn input_grid(p: &Program) -> Vec<Vec<u8>> {
    let mut args: BTreeSet<U256> = [0u64, 1, 255, 1 << 40]
        .into_iter()
        .map(U256::from)
        .collect();
    args.insert(U256::MAX);
    for &c in &p.thresholds {
        args.insert(U256::from(c));
        args.insert(U256::from(c) - U256::from(1u8));
        args.insert(U256::from(c) + U256::from(1u8));
    }
    let mut out = vec![vec![], vec![0x12, 0x34], vec![0xff, 0xff, 0xff, 0xff]];
    for sel in &p.selectors {
        for a in &args {
            let mut cd = sel.to_vec();
            cd.extend_from_slice(&a.to_be_bytes::<32>());
            out.push(cd);
        }
    }
    out
}

/// Block-to-block transitions observed while running `code` on each input,
/// as (from block start, to block start) pairs.
pub fn observe_edges(code: &[u8], inputs: &[Vec<u8>]) -> BTreeSet<(usize, usize)> {
    let me = U256::from(0x1000u64);
    let mut edges = BTreeSet::new();
    for data in inputs {
        let mut world = World::default();
        world.deploy(me, code.to_vec());
        let msg = Message::new(U256::from(0xaau64), me, data.clone());
        let (_, trace) = run(&mut world, &msg, &mut DefaultHost);
        edges.extend(trace.transitions.iter().map(|t| (t.from, t.to)));
    }
    edges
}
