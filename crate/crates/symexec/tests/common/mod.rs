#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ceiscan_evm::U256;
use ceiscan_frontend::*;
use ceiscan_pdg::{run_stage_one, SlicerConfig, Warning};
use ceiscan_symexec::*;
use ceiscan_toy_evm as toy;

pub const MUTEX: &str = r#"
contract Bank {
    mapping(address => uint) balances;
    bool locked;
    function deposit() public payable { balances[msg.sender] += msg.value; }
    function withdraw() public {
        require(!locked);
        locked = true;
        uint amount = balances[msg.sender];
        require(amount > 0);
        (bool ok, ) = msg.sender.call{value: amount}("");
        require(ok);
        balances[msg.sender] = 0;
        locked = false;
    }
}
"#;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn config() -> CompilerConfig {
    CompilerConfig {
        want_bytecode: true,
        ..CompilerConfig::default()
    }
}

pub fn load(name: &str) -> ContractModel {
    compile_and_load(&[fixture(name)], &config()).expect("fixture compiles")
}

pub fn load_text(text: &str) -> ContractModel {
    let mut s = BTreeMap::new();
    s.insert("t.sol".to_string(), format!("// SPDX-License-Identifier: UNLICENSED\npragma solidity ^0.8.0;\n{text}"));
    compile_sources(&s, &config()).expect("compiles")
}

pub fn warnings(model: &ContractModel) -> Vec<Warning> {
    run_stage_one(model, &SlicerConfig::default()).warnings
}

pub fn verify_all(model: &ContractModel) -> Vec<(Warning, Verdict)> {
    let deployment = Deployment::new(model).expect("deploys");
    let mut z3 = Z3::start(&SolverConfig::default()).expect("z3 available");
    warnings(model)
        .into_iter()
        .map(|w| {
            let v = verify_warning(model, &deployment, &w, &StageTwoConfig::default(), &mut z3);
            (w, v)
        })
        .collect()
}

/// Target call pcs of a warning in the account hosting its first entry.
pub fn target_of(model: &ContractModel, d: &Deployment, w: &Warning) -> (usize, BTreeSet<usize>) {
    let host = d.host_of(model, w.entry_points[0]).expect("host");
    let a = &d.program.accounts[host];
    let l = locate_warning_targets(&a.code.bytes, &d.source_maps[host], &a.code.cfg, &w.span);
    (host, l.call_pcs)
}

#[derive(Debug, Default)]
pub struct Replay {
    pub target_hits: usize,
    /// Guard storage was untouched when the target call was first made.
    pub effect_unapplied: bool,
    pub reentered: bool,
    pub top_success: bool,
}

/// Answers calls as the witness prescribes: known code runs, the target
/// call re-enters or returns, other calls return their stubs.
struct ReplayHost {
    target: U256,
    pcs: BTreeSet<usize>,
    reentry: Option<toy::Message>,
    guard: Vec<(U256, U256, U256)>,
    stubs: Vec<(U256, usize, bool, Vec<u8>)>,
    out: Replay,
}

impl toy::Host for ReplayHost {
    fn on_call(&mut self, ev: &toy::CallEvent, world: &toy::World) -> toy::CallAction {
        if ev.from == self.target && self.pcs.contains(&ev.pc) {
            self.out.target_hits += 1;
            if self.out.target_hits == 1 {
                self.out.effect_unapplied = self.guard.iter().all(|(a, k, v)| world.sload(*a, *k) == *v);
                if let Some(m) = self.reentry.take() {
                    self.out.reentered = true;
                    return toy::CallAction::ReEnter {
                        messages: vec![m],
                        success: true,
                        data: Vec::new(),
                    };
                }
            }
            return toy::CallAction::Return {
                success: true,
                data: Vec::new(),
            };
        }
        if world.account(ev.to).is_some_and(|a| !a.code.is_empty()) {
            return toy::CallAction::Execute;
        }
        if let Some(i) = self.stubs.iter().position(|s| s.0 == ev.from && s.1 == ev.pc) {
            let (_, _, success, data) = self.stubs.remove(i);
            return toy::CallAction::Return { success, data };
        }
        toy::CallAction::Return {
            success: true,
            data: Vec::new(),
        }
    }
}

fn message(tx: &WitnessTx) -> toy::Message {
    toy::Message {
        caller: tx.caller,
        to: tx.to,
        value: tx.value,
        data: tx.data.clone(),
    }
}

pub fn replay(w: &Witness) -> Replay {
    let mut world = toy::World::default();
    for a in &w.accounts {
        world.deploy(a.address, a.code.clone());
        world.account_mut(a.address).balance = a.balance;
        for (k, v) in &a.storage {
            world.sstore(a.address, *k, *v);
        }
    }
    world.account_mut(w.attacker).is_contract = true;
    world.account_mut(w.transaction.caller).balance = w.transaction.value;
    if let Some(r) = &w.reentry {
        let b = world.balance(r.caller);
        world.account_mut(r.caller).balance = b.saturating_add(r.value);
    }
    let guard = w.guard_keys.iter().map(|(a, k)| (*a, *k, world.sload(*a, *k))).collect();
    let mut host = ReplayHost {
        target: w.target_address,
        pcs: w.target_pcs.iter().copied().collect(),
        reentry: w.reentry.as_ref().map(message),
        guard,
        stubs: w.stubs.iter().map(|s| (s.from, s.pc, s.success, s.data.clone())).collect(),
        out: Replay::default(),
    };
    let (outcome, _) = toy::run(&mut world, &message(&w.transaction), &mut host);
    host.out.top_success = outcome.success;
    host.out
}

/// Concrete search for a violating run: the target call with guard
/// storage untouched and, when `reentry`, a second target call made from
/// inside the first.
pub struct Grid {
    pub callers: Vec<U256>,
    pub calldata: Vec<Vec<u8>>,
    pub values: Vec<U256>,
    /// Storage assignments of the host contract to try.
    pub storage: Vec<BTreeMap<U256, U256>>,
    pub balance: U256,
}

struct GridHost {
    target: U256,
    pcs: BTreeSet<usize>,
    reentry: Option<toy::Message>,
    guard: Vec<(U256, U256, U256)>,
    hits: usize,
    clean_first_hit: bool,
}

impl toy::Host for GridHost {
    fn on_call(&mut self, ev: &toy::CallEvent, world: &toy::World) -> toy::CallAction {
        if ev.from == self.target && self.pcs.contains(&ev.pc) {
            self.hits += 1;
            if self.hits == 1 {
                self.clean_first_hit = self.guard.iter().all(|(a, k, v)| world.sload(*a, *k) == *v);
                if let Some(m) = self.reentry.take() {
                    return toy::CallAction::ReEnter {
                        messages: vec![m],
                        success: true,
                        data: Vec::new(),
                    };
                }
            }
            return toy::CallAction::Return {
                success: true,
                data: Vec::new(),
            };
        }
        toy::CallAction::Execute
    }
}

/// Number of grid points whose run exhibits the violation.
pub fn grid_violations(d: &Deployment, host: usize, pcs: &BTreeSet<usize>, guard_keys: &[U256], reentry: bool, g: &Grid) -> usize {
    let target = d.program.accounts[host].address;
    let mut found = 0;
    for storage in &g.storage {
        for caller in &g.callers {
            for data in &g.calldata {
                for value in &g.values {
                    let mut world = toy::World::default();
                    for a in &d.program.accounts {
                        world.deploy(a.address, a.code.bytes.clone());
                    }
                    for (k, v) in storage {
                        world.sstore(target, *k, *v);
                    }
                    world.account_mut(target).balance = g.balance;
                    world.account_mut(*caller).balance = value.saturating_mul(U256::from(2));
                    world.account_mut(*caller).is_contract = true;
                    let msg = toy::Message {
                        caller: *caller,
                        to: target,
                        value: *value,
                        data: data.clone(),
                    };
                    let mut host = GridHost {
                        target,
                        pcs: pcs.clone(),
                        reentry: reentry.then(|| msg.clone()),
                        guard: guard_keys.iter().map(|k| (target, *k, world.sload(target, *k))).collect(),
                        hits: 0,
                        clean_first_hit: false,
                    };
                    toy::run(&mut world, &msg, &mut host);
                    let violated = host.clean_first_hit && (!reentry || host.hits >= 2);
                    found += violated as usize;
                }
            }
        }
    }
    found
}
