//! Dependence edges checked against brute-force definitions.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use ceiscan_frontend::{ContractModel, StmtId};
use ceiscan_pdg::*;
use common::*;

/// Forward search from each definition, stopping at statements that
/// overwrite it.
fn reaching_defs_oracle(m: &ContractModel, icfg: &Icfg) -> BTreeSet<(StmtId, StmtId)> {
    let mut succ: BTreeMap<StmtId, Vec<StmtId>> = BTreeMap::new();
    for (a, b, _) in &icfg.edges {
        if !icfg.revert_edges.contains(&(*a, *b)) {
            succ.entry(*a).or_default().push(*b);
        }
    }
    let mut out = BTreeSet::new();
    for d in &icfg.nodes {
        for w in &m.stmt(*d).writes {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<StmtId> = succ.get(d).cloned().unwrap_or_default();
            while let Some(n) = stack.pop() {
                if !seen.insert(n) {
                    continue;
                }
                let st = m.stmt(n);
                if st.reads.iter().any(|r| w.may_alias(r)) {
                    out.insert((*d, n));
                }
                if st.writes.iter().any(|x| x.kills(w)) {
                    continue;
                }
                stack.extend(succ.get(&n).into_iter().flatten());
            }
        }
    }
    out
}

fn reaches_exit_without(succ: &BTreeMap<StmtId, BTreeSet<StmtId>>, from: StmtId, exit: StmtId, removed: StmtId) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(n) = stack.pop() {
        if n == exit {
            return true;
        }
        for s in &succ[&n] {
            if *s != removed && seen.insert(*s) {
                stack.push(*s);
            }
        }
    }
    false
}

/// `b` is control dependent on `a` when `b` post-dominates some successor
/// of `a` but does not strictly post-dominate `a`.
fn control_oracle(cfg: &FunctionCfg) -> BTreeSet<(StmtId, StmtId)> {
    let succ = cfg.dependence_graph();
    let pdom = |b: StmtId, x: StmtId| b == x || !reaches_exit_without(&succ, x, cfg.exit, b);
    let mut out = BTreeSet::new();
    for a in &cfg.nodes {
        for b in &cfg.nodes {
            let strictly = b != a && pdom(*b, *a);
            if !strictly && succ[a].iter().any(|s| pdom(*b, *s)) {
                out.insert((*a, *b));
            }
        }
    }
    out
}

fn check(m: &ContractModel) {
    let icfg = build_icfg(m);
    let ipdg = build_ipdg(m, &icfg);
    let data = reaching_defs_oracle(m, &icfg);
    assert!(!data.is_empty());
    assert_eq!(ipdg.edges_of(DepKind::Data), data);
    let mut control = BTreeSet::new();
    for cfg in icfg.functions.values() {
        control.extend(control_oracle(cfg));
    }
    assert_eq!(ipdg.edges_of(DepKind::Control), control);
}

#[test]
fn fixtures_match_oracles() {
    for name in [
        "fig1_withdraw.sol",
        "fig1_withdraw_fixed.sol",
        "cream_borrow.sol",
        "cream_borrow_fixed.sol",
        "fig8_withdraw_all.sol",
    ] {
        check(&load(name));
    }
}

#[test]
fn loops_and_early_exits_match_oracles() {
    check(&load_text(SHAPES));
}

#[test]
fn fig1_require_controls_the_interaction_and_the_effect() {
    let m = load("fig1_withdraw.sol");
    let w = func(&m, "ContractA", "withdraw");
    let icfg = build_icfg(&m);
    let ipdg = build_ipdg(&m, &icfg);
    let control = ipdg.edges_of(DepKind::Control);
    let l5 = one_on_line(&m, w, 5);
    assert!(control.contains(&(l5, one_on_line(&m, w, 6))));
    assert!(control.contains(&(l5, one_on_line(&m, w, 7))));
    assert!(!control.contains(&(l5, one_on_line(&m, w, 4))));
}

#[test]
fn post_dominators_of_straight_line_code() {
    let m = load("fig1_withdraw.sol");
    let w = func(&m, "ContractA", "withdraw");
    let icfg = build_icfg(&m);
    let cfg = &icfg.functions[&w.id];
    let pdom = post_dominators(cfg);
    let l4 = one_on_line(&m, w, 4);
    let l7 = one_on_line(&m, w, 7);
    assert!(pdom[&l4].contains(&cfg.exit));
    assert!(pdom[&l4].contains(&one_on_line(&m, w, 5)));
    // the require can abort, so nothing after it post-dominates L4
    assert!(!pdom[&l4].contains(&l7));
}
