//! Protection patterns that make a same-contract warning harmless.

use std::collections::{BTreeSet, VecDeque};
use std::sync::LazyLock;

use ceiscan_frontend::{ContractModel, FunctionId, FunctionKind, StateVarId, StmtId, StmtKind};
use ceiscan_pdg::{Icfg, Warning};
use regex::Regex;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    PermissionCheck,
    StorageMutex,
    ReentrancyGuardModifier,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::PermissionCheck => "permission-check",
            DropReason::StorageMutex => "storage-mutex",
            DropReason::ReentrancyGuardModifier => "reentrancy-guard-modifier",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PptDecision {
    Keep,
    Drop(DropReason),
}

static SENDER_EQ: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"msg\.sender\s*[!=]=\s*([A-Za-z_]\w*)|([A-Za-z_]\w*)\s*[!=]=\s*msg\.sender").expect("regex")
});

/// Every violated variable belongs to a contract hosting every entry point,
/// so exploiting it needs the attacker to come back through that contract.
pub fn single_contract(model: &ContractModel, warning: &Warning) -> bool {
    warning.entry_points.iter().all(|e| {
        model
            .contracts
            .iter()
            .any(|c| c.functions.contains(e) && warning.violated.iter().all(|v| c.state_vars.contains(v)))
    })
}

fn reaches(icfg: &Icfg, from: StmtId, to: StmtId) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            return true;
        }
        for (s, _) in icfg.successors(n) {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
    }
    false
}

/// Statements of functions on call chains from `entry` to the warned function.
fn chain_statements(model: &ContractModel, entry: FunctionId, target: FunctionId) -> Vec<StmtId> {
    chain_functions(model, entry, target)
        .into_iter()
        .flat_map(|f| model.function_nodes(f))
        .collect()
}

fn chain_functions(model: &ContractModel, entry: FunctionId, target: FunctionId) -> Vec<FunctionId> {
    model
        .reachable_functions(entry)
        .into_iter()
        .chain([entry])
        .filter(|f| *f == target || model.reachable_functions(*f).contains(&target))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn writers_of(model: &ContractModel, v: StateVarId) -> impl Iterator<Item = FunctionId> + '_ {
    model
        .statements
        .iter()
        .filter(move |s| s.writes.iter().any(|w| w.state_var() == Some(v)))
        .map(|s| s.function)
}

fn state_var_named(model: &ContractModel, entry: FunctionId, name: &str) -> Option<StateVarId> {
    let c = model.contracts.iter().find(|c| c.functions.contains(&entry))?;
    c.state_vars.iter().copied().find(|v| model.state_var(*v).name == name)
}

fn permission_check(model: &ContractModel, icfg: &Icfg, entry: FunctionId, w: &Warning) -> bool {
    chain_statements(model, entry, w.function).into_iter().any(|s| {
        let st = model.stmt(s);
        if st.kind != StmtKind::ConditionCheck || !reaches(icfg, s, w.interaction) {
            return false;
        }
        SENDER_EQ.captures_iter(&st.label).any(|c| {
            let name = c.get(1).or(c.get(2)).map_or("", |m| m.as_str());
            state_var_named(model, entry, name).is_some_and(|v| {
                writers_of(model, v).all(|f| model.function(f).kind == FunctionKind::Constructor)
            })
        })
    })
}

fn storage_mutex(model: &ContractModel, icfg: &Icfg, entry: FunctionId, w: &Warning) -> bool {
    let stmts = chain_statements(model, entry, w.function);
    stmts.iter().any(|&r| {
        let check = model.stmt(r);
        if check.kind != StmtKind::ConditionCheck || !reaches(icfg, r, w.interaction) {
            return false;
        }
        check.reads.iter().filter_map(|v| v.state_var()).any(|m| {
            let var = model.state_var(m);
            let scalar = var.type_string == "bool" || var.type_string.starts_with("uint");
            scalar
                && !var.is_mapping()
                && stmts.iter().any(|&s| {
                    s != r
                        && model.stmt(s).writes.iter().any(|x| x.state_var() == Some(m))
                        && reaches(icfg, r, s)
                        && reaches(icfg, s, w.interaction)
                })
        })
    })
}

fn guard_modifier(model: &ContractModel, entry: FunctionId, w: &Warning) -> bool {
    chain_functions(model, entry, w.function).into_iter().any(|f| {
        model
            .function(f)
            .modifiers
            .iter()
            .any(|m| m.name.eq_ignore_ascii_case("nonreentrant"))
    })
}

/// Drops a warning when every entry point is protected against coming
/// back into the same contract. Warnings whose violated state lives in
/// another contract are always kept.
pub fn ppt_filter(model: &ContractModel, icfg: &Icfg, warning: &Warning) -> PptDecision {
    if !single_contract(model, warning) || warning.entry_points.is_empty() {
        return PptDecision::Keep;
    }
    let reasons: Vec<Option<DropReason>> = warning
        .entry_points
        .iter()
        .map(|&e| {
            if permission_check(model, icfg, e, warning) {
                Some(DropReason::PermissionCheck)
            } else if guard_modifier(model, e, warning) {
                Some(DropReason::ReentrancyGuardModifier)
            } else if storage_mutex(model, icfg, e, warning) {
                Some(DropReason::StorageMutex)
            } else {
                None
            }
        })
        .collect();
    match reasons.iter().copied().collect::<Option<Vec<_>>>() {
        Some(r) => PptDecision::Drop(r[0]),
        None => PptDecision::Keep,
    }
}
