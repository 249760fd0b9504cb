use std::cell::RefCell;
use std::collections::BTreeMap;
use std::time::Duration;

use ceiscan_evm::{Opcode, U256};
use ceiscan_symexec::term::{app, var, word, T};
use ceiscan_symexec::*;
use proptest::prelude::*;

fn c(term: T, nonzero: bool) -> Conjunct {
    Conjunct { term, nonzero }
}

fn holds(cs: &[Conjunct], env: &BTreeMap<String, U256>) -> bool {
    cs.iter().all(|c| c.term.eval(env).is_zero() != c.nonzero)
}

fn gt(a: T, b: T) -> T {
    app(Opcode::GT, vec![a, b])
}

fn lt(a: T, b: T) -> T {
    app(Opcode::LT, vec![a, b])
}

fn check(cs: &[Conjunct]) -> SatResult {
    solve(cs, Duration::from_secs(10), &SolverConfig::default()).expect("z3 available")
}

#[test]
fn disjoint_bounds_are_unsat() {
    let x = var("x", 256);
    assert_eq!(check(&[c(gt(x.clone(), word(5)), true), c(lt(x, word(3)), true)]), SatResult::Unsat);
}

#[test]
fn balance_covering_amount_is_sat() {
    let (bal, amount, caller) = (var("bal", 256), var("amount", 256), var("caller", 160));
    let cs = [
        c(lt(bal.clone(), amount.clone()), false),
        c(gt(amount.clone(), word(0)), true),
        c(caller.clone(), true),
        c(app(Opcode::EQ, vec![caller, word(0xC0DE0000)]), false),
    ];
    let SatResult::Sat(m) = check(&cs) else { panic!("expected sat") };
    assert!(holds(&cs, &m));
    assert!(m["bal"] >= m["amount"]);
}

#[test]
fn wrapping_subtraction_is_modelled() {
    // underflowing `bal - amount` wraps instead of failing
    let (bal, amount) = (var("bal", 8), var("amount", 8));
    let diff = app(Opcode::SUB, vec![bal.clone(), amount.clone()]);
    let cs = [c(lt(bal, amount), true), c(gt(diff, word(1000)), true)];
    let SatResult::Sat(m) = check(&cs) else { panic!("expected sat") };
    assert!(holds(&cs, &m));
}

#[test]
fn hashed_keys_are_consistent() {
    use ceiscan_symexec::term::keccak;
    let (a, b) = (var("a", 160), var("b", 160));
    let ka = keccak(vec![a.clone(), word(0)]);
    let kb = keccak(vec![b.clone(), word(0)]);
    let cs = [c(app(Opcode::EQ, vec![a, b]), true), c(app(Opcode::EQ, vec![ka, kb]), false)];
    assert_eq!(check(&cs), SatResult::Unsat);
}

const OPS: [Opcode; 16] = [
    Opcode::ADD,
    Opcode::SUB,
    Opcode::MUL,
    Opcode::DIV,
    Opcode::MOD,
    Opcode::LT,
    Opcode::GT,
    Opcode::EQ,
    Opcode::AND,
    Opcode::OR,
    Opcode::XOR,
    Opcode::SHL,
    Opcode::SHR,
    Opcode::SLT,
    Opcode::SDIV,
    Opcode::BYTE,
];

fn term() -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        Just(var("x", 3)),
        Just(var("y", 3)),
        (0u64..10).prop_map(word),
        Just(app(Opcode::NOT, vec![word(0)])),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (0..OPS.len(), inner.clone(), inner.clone()).prop_map(|(i, a, b)| app(OPS[i], vec![a, b])),
            inner.clone().prop_map(|a| app(Opcode::ISZERO, vec![a])),
            inner.prop_map(|a| app(Opcode::NOT, vec![a])),
        ]
    })
}

thread_local! {
    static Z3_SESSION: RefCell<Z3> = RefCell::new(Z3::start(&SolverConfig::default()).expect("z3 available"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Against exhaustive enumeration of two 3-bit variables.
    #[test]
    fn agrees_with_enumeration(parts in proptest::collection::vec((term(), any::<bool>()), 1..4)) {
        let cs: Vec<Conjunct> = parts.into_iter().map(|(t, nz)| c(t, nz)).collect();
        let mut any = false;
        for x in 0u64..8 {
            for y in 0u64..8 {
                let env = BTreeMap::from([("x".to_string(), U256::from(x)), ("y".to_string(), U256::from(y))]);
                any |= holds(&cs, &env);
            }
        }
        let r = Z3_SESSION.with(|z| z.borrow_mut().check(&cs)).expect("query runs");
        match r {
            SatResult::Sat(m) => {
                prop_assert!(any);
                prop_assert!(holds(&cs, &m), "model {m:?} violates {cs:?}");
            }
            SatResult::Unsat => prop_assert!(!any, "unsat but enumeration found a solution: {cs:?}"),
            SatResult::Unknown => prop_assert!(false, "unknown on a tiny query"),
        }
    }
}
