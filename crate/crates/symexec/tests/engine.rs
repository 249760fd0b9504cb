use std::collections::BTreeMap;

use ceiscan_evm::{Opcode, U256};
use ceiscan_symexec::memory::Memory;
use ceiscan_symexec::state::Frame;
use ceiscan_symexec::term::{app, var, word};
use ceiscan_symexec::*;

fn frame(account: usize) -> Frame {
    Frame {
        account,
        code: account,
        pc: 0,
        stack: Vec::new(),
        memory: Memory::default(),
        calldata: Vec::new(),
        caller: var("caller", 160),
        callvalue: word(0),
        returndata: Vec::new(),
        is_static: false,
        ret_area: (0, 32),
        snapshot: None,
        visits: BTreeMap::new(),
    }
}

fn state() -> SymbolicState {
    SymbolicState {
        frames: vec![frame(0)],
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
    }
}

fn program(n: usize) -> Program {
    Program {
        accounts: (0..n)
            .map(|i| engine::account(&format!("C{i}"), U256::from(0xC0DE_0000u64 + i as u64), vec![0x00]))
            .collect(),
    }
}

fn args(i: usize) -> CallArgs {
    CallArgs {
        op: Opcode::CALL,
        pc: 7,
        address: word(0xC0DE_0000 + i as u64),
        value: word(0),
        input: Vec::new(),
        ret_area: (0, 32),
    }
}

#[test]
fn fourth_nested_call_is_answered_symbolically() {
    let p = program(5);
    let mut st = state();
    for i in 1..=3 {
        call_context_switch(&mut st, &p, Callee::Known(i), args(i), 3);
        assert_eq!(st.call_depth(), i);
        assert_eq!(st.frames.last().expect("frame").caller, word(0xC0DE_0000 + i as u64 - 1));
    }
    call_context_switch(&mut st, &p, Callee::Known(4), args(4), 3);
    assert_eq!(st.call_depth(), 3);
    assert_eq!(st.stubs.len(), 1);
    let f = st.frames.last().expect("frame");
    assert_eq!(f.stack.len(), 1);
    assert_eq!(f.returndata.len(), 32);
    assert!(f.stack[0].mentions(&|n| n.starts_with("ok")));
}

#[test]
fn known_callee_snapshots_storage() {
    let p = program(2);
    let mut st = state();
    st.register.store(0, &word(1), word(5));
    call_context_switch(&mut st, &p, Callee::Known(1), args(1), 3);
    st.register.store(1, &word(1), word(9));
    let snap = st.frames[1].snapshot.clone().expect("snapshot");
    assert_eq!(snap.writes.len(), 1);
}

#[test]
fn delegatecall_keeps_storage_context() {
    let p = program(2);
    let mut st = state();
    let a = CallArgs {
        op: Opcode::DELEGATECALL,
        ..args(1)
    };
    call_context_switch(&mut st, &p, Callee::Known(1), a, 3);
    let f = st.frames.last().expect("frame");
    assert_eq!((f.account, f.code), (0, 1));
    assert_eq!(f.caller, var("caller", 160));
}

#[test]
fn register_reads_over_writes() {
    let mut r = Register::default();
    let mut n = 0;
    let mut fresh = || {
        n += 1;
        var(&format!("s{n}"), 256)
    };
    let k = app(Opcode::ADD, vec![var("k", 256), word(1)]);
    let first = r.load(0, &k, &mut fresh);
    assert_eq!(r.load(0, &k, &mut fresh), first);
    r.store(0, &k, word(3));
    assert_eq!(r.load(0, &k, &mut fresh), word(3));
    // other accounts and other keys stay independent
    assert_ne!(r.load(1, &k, &mut fresh), word(3));
    assert_ne!(r.load(0, &word(1), &mut fresh), word(3));
    assert_eq!(r.initial.len(), 3);
}

#[test]
fn constraints_only_grow() {
    let mut pc = PathConstraint::default();
    let x = var("x", 8);
    pc.assume(app(Opcode::GT, vec![x.clone(), word(1)]), true);
    pc.assume(word(1), true);
    assert_eq!(pc.conjuncts.len(), 1);
    let before = pc.conjuncts.clone();
    pc.push(app(Opcode::LT, vec![x, word(9)]), true, Some((0, 4, true)));
    assert_eq!(&pc.conjuncts[..1], &before[..]);
    assert!(!pc.trivially_false());
    pc.assume(word(0), true);
    assert!(pc.trivially_false());
}
