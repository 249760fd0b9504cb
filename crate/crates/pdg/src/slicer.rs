//! Slicing criteria, backward slices, and the Check-Effect-Interaction
//! ordering check.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ceiscan_frontend::{
    CallMechanism, CallSite, ContractModel, FunctionId, Span, StateVarId, StmtId, StmtKind, Taint, VarBase,
};
use serde::{Deserialize, Serialize};

use crate::icfg::Icfg;
use crate::ipdg::{DepKind, Ipdg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    EthCallValue,
    ErcTokenCall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    High,
    /// `send`/`transfer`: only a 2300 gas stipend is forwarded.
    GasLimited,
    /// No state-reading check guards the interaction.
    Unchecked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SliceCriterion {
    pub entry_node: StmtId,
    pub rule: Rule,
    pub address_taint: Taint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Slice {
    pub criterion: SliceCriterion,
    pub nodes: BTreeSet<StmtId>,
    pub retained_call_deps: BTreeSet<(StmtId, StmtId)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub function: FunctionId,
    /// Transaction entry points through which the violation occurs.
    pub entry_points: Vec<FunctionId>,
    pub span: Span,
    pub rule: Rule,
    pub checks: Vec<StmtId>,
    pub interaction: StmtId,
    pub effect: Option<StmtId>,
    pub guard_state: BTreeSet<StateVarId>,
    /// Guard variables some path leaves unwritten before the interaction.
    pub violated: BTreeSet<StateVarId>,
    pub confidence: Confidence,
    /// The path cap was hit and the warning was kept conservatively.
    pub path_cap_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicerConfig {
    /// Call names, address expressions, or `Contract.function` targets that
    /// never yield criteria.
    pub allowlist: Vec<String>,
    pub max_paths: usize,
    pub max_call_depth: usize,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        SlicerConfig {
            allowlist: Vec::new(),
            max_paths: 10_000,
            max_call_depth: 32,
        }
    }
}

fn allowlisted(model: &ContractModel, call: &CallSite, config: &SlicerConfig) -> bool {
    config.allowlist.iter().any(|a| {
        *a == call.name
            || call.address.as_deref() == Some(a.as_str())
            || call.resolved().is_some_and(|f| model.qualified_name(f) == *a)
    })
}

/// External calls matching the ETH or ERC rule through user-input
/// addresses.
pub fn find_criteria(model: &ContractModel, ipdg: &Ipdg, config: &SlicerConfig) -> Vec<SliceCriterion> {
    let mut out = Vec::new();
    for s in &ipdg.nodes {
        let Some(call) = &model.stmt(*s).call else { continue };
        if !call.is_external() || call.address_taint != Taint::UserInput || allowlisted(model, call, config) {
            continue;
        }
        let rule = if call.value_transfer {
            Rule::EthCallValue
        } else if !call.is_static && matches!(call.mechanism, CallMechanism::HighLevel | CallMechanism::LowLevelCall) {
            Rule::ErcTokenCall
        } else {
            continue;
        };
        out.push(SliceCriterion {
            entry_node: *s,
            rule,
            address_taint: call.address_taint,
        });
    }
    out
}

pub fn backward_slice(ipdg: &Ipdg, criterion: &SliceCriterion) -> Slice {
    let nodes = ipdg.backward_closure([criterion.entry_node]);
    let retained_call_deps = ipdg
        .edges
        .iter()
        .filter(|(a, b, k)| *k == DepKind::Call && nodes.contains(a) && nodes.contains(b))
        .map(|(a, b, _)| (*a, *b))
        .collect();
    Slice {
        criterion: criterion.clone(),
        nodes,
        retained_call_deps,
    }
}

/// Precomputed write summaries shared by all criteria of one model.
pub struct Effects {
    direct: BTreeMap<StmtId, BTreeSet<StateVarId>>,
    /// State written by a function or anything it calls.
    transitive: BTreeMap<FunctionId, BTreeSet<StateVarId>>,
}

impl Effects {
    pub fn new(model: &ContractModel) -> Self {
        let mut direct = BTreeMap::new();
        for s in &model.statements {
            let mut w: BTreeSet<StateVarId> = s.writes.iter().filter_map(|w| w.state_var()).collect();
            if s.opaque {
                let contract = model.function(s.function).contract;
                w.extend(model.state_vars.iter().filter(|v| v.contract == contract).map(|v| v.id));
            }
            direct.insert(s.id, w);
        }
        let mut own: BTreeMap<FunctionId, BTreeSet<StateVarId>> = BTreeMap::new();
        for f in &model.functions {
            let set = own.entry(f.id).or_default();
            for s in model.function_nodes(f.id) {
                set.extend(direct[&s].iter().copied());
            }
        }
        let transitive = model
            .functions
            .iter()
            .map(|f| {
                let all = model
                    .reachable_functions(f.id)
                    .into_iter()
                    .flat_map(|g| own[&g].iter().copied())
                    .collect();
                (f.id, all)
            })
            .collect();
        Effects { direct, transitive }
    }

    pub fn direct(&self, s: StmtId) -> &BTreeSet<StateVarId> {
        &self.direct[&s]
    }

    pub fn of_function(&self, f: FunctionId) -> &BTreeSet<StateVarId> {
        &self.transitive[&f]
    }

    /// Writes of a call statement's resolved callee.
    pub fn summary(&self, model: &ContractModel, icfg: &Icfg, s: StmtId) -> BTreeSet<StateVarId> {
        icfg.callee(model, s)
            .map(|f| self.transitive[&f].clone())
            .unwrap_or_default()
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct PathState {
    node: StmtId,
    stack: Vec<StmtId>,
    written: BTreeSet<StateVarId>,
}

enum Search {
    Done(BTreeSet<StateVarId>),
    CapHit,
}

/// Explores transaction paths from `entry` to `target`; returns the guard
/// variables left unwritten on some path when it reaches `target`.
fn unwritten_on_some_path(
    model: &ContractModel,
    icfg: &Icfg,
    effects: &Effects,
    entry: FunctionId,
    target: StmtId,
    relevant: &BTreeSet<StateVarId>,
    config: &SlicerConfig,
) -> Search {
    let mut violated = BTreeSet::new();
    let mut seen: HashSet<PathState> = HashSet::new();
    let mut work = vec![PathState {
        node: icfg.functions[&entry].entry,
        stack: Vec::new(),
        written: BTreeSet::new(),
    }];
    let intra_succ = |n: StmtId| -> Vec<StmtId> {
        let cfg = &icfg.functions[&model.stmt(n).function];
        cfg.successors(n).filter(|s| !cfg.revert.contains(&(n, *s))).collect()
    };
    while let Some(st) = work.pop() {
        if !seen.insert(st.clone()) {
            continue;
        }
        if seen.len() > config.max_paths {
            return Search::CapHit;
        }
        let n = st.node;
        if n == target {
            let mut w = st.written.clone();
            w.extend(effects.summary(model, icfg, n));
            violated.extend(relevant.difference(&w).copied());
            continue;
        }
        let apply = |mut w: BTreeSet<StateVarId>, s: StmtId| {
            w.extend(effects.direct(s).iter().filter(|v| relevant.contains(v)));
            w
        };
        if let Some(callee) = icfg.callee(model, n).filter(|_| st.stack.len() < config.max_call_depth) {
            let mut stack = st.stack.clone();
            stack.push(n);
            work.push(PathState {
                node: icfg.functions[&callee].entry,
                stack,
                written: st.written.clone(),
            });
            continue;
        }
        let func = model.stmt(n).function;
        if n == icfg.functions[&func].exit {
            if let Some((&caller, rest)) = st.stack.split_last() {
                let written = apply(st.written.clone(), caller);
                for s in intra_succ(caller) {
                    work.push(PathState {
                        node: s,
                        stack: rest.to_vec(),
                        written: written.clone(),
                    });
                }
            }
            continue;
        }
        let written = apply(st.written.clone(), n);
        for s in intra_succ(n) {
            work.push(PathState {
                node: s,
                stack: st.stack.clone(),
                written: written.clone(),
            });
        }
    }
    Search::Done(violated)
}

/// Applies the C-E-I ordering check to one slice.
pub fn check_cei(
    model: &ContractModel,
    icfg: &Icfg,
    ipdg: &Ipdg,
    effects: &Effects,
    slice: &Slice,
    config: &SlicerConfig,
) -> Option<Warning> {
    let interaction = slice.criterion.entry_node;
    let stmt = model.stmt(interaction);
    let call = stmt.call.as_ref()?;
    let checks: Vec<StmtId> = slice
        .nodes
        .iter()
        .copied()
        .filter(|s| model.stmt(*s).kind == StmtKind::ConditionCheck && *s != interaction)
        .collect();
    let guard_nodes = ipdg.backward_closure(checks.iter().copied());
    let guard_state: BTreeSet<StateVarId> = guard_nodes
        .iter()
        .flat_map(|s| model.stmt(*s).reads.iter())
        .filter_map(|r| match r.base {
            VarBase::State(v) => Some(v),
            _ => None,
        })
        .collect();

    let home = stmt.function;
    let mut entry_points = Vec::new();
    let mut violated = BTreeSet::new();
    let mut cap_hit = false;
    for e in &icfg.entry_points {
        if !model.reachable_functions(*e).contains(&home) {
            continue;
        }
        if guard_state.is_empty() {
            entry_points.push(*e);
            continue;
        }
        let relevant: BTreeSet<StateVarId> = guard_state.intersection(effects.of_function(*e)).copied().collect();
        if relevant.is_empty() {
            // the check's state never changes in this transaction
            entry_points.push(*e);
            violated.extend(guard_state.iter().copied());
            continue;
        }
        match unwritten_on_some_path(model, icfg, effects, *e, interaction, &relevant, config) {
            Search::Done(v) if v.is_empty() => {}
            Search::Done(v) => {
                entry_points.push(*e);
                violated.extend(v);
            }
            Search::CapHit => {
                entry_points.push(*e);
                violated.extend(relevant);
                cap_hit = true;
            }
        }
    }
    if entry_points.is_empty() {
        return None;
    }

    let effect = effect_node(model, icfg, effects, home, &entry_points, &violated);
    let confidence = if !call.unlimited_gas {
        Confidence::GasLimited
    } else if guard_state.is_empty() {
        Confidence::Unchecked
    } else {
        Confidence::High
    };
    Some(Warning {
        function: home,
        entry_points,
        span: stmt.span,
        rule: slice.criterion.rule,
        checks,
        interaction,
        effect,
        guard_state,
        violated,
        confidence,
        path_cap_hit: cap_hit,
    })
}

/// A statement writing a violated guard variable, preferring the
/// interaction's own function.
fn effect_node(
    model: &ContractModel,
    icfg: &Icfg,
    effects: &Effects,
    home: FunctionId,
    entries: &[FunctionId],
    violated: &BTreeSet<StateVarId>,
) -> Option<StmtId> {
    let writes = |s: StmtId| {
        let mut w = effects.direct(s).clone();
        w.extend(effects.summary(model, icfg, s));
        w.iter().any(|v| violated.contains(v))
    };
    if let Some(s) = model.function_nodes(home).into_iter().find(|s| writes(*s)) {
        return Some(s);
    }
    let mut funcs = BTreeSet::new();
    for e in entries {
        funcs.extend(model.reachable_functions(*e));
    }
    funcs
        .into_iter()
        .flat_map(|f| model.function_nodes(f))
        .find(|s| !effects.direct(*s).is_disjoint(violated))
}

/// Everything Stage I produces for one model.
pub struct StageOne {
    pub icfg: Icfg,
    pub ipdg: Ipdg,
    pub criteria: Vec<SliceCriterion>,
    pub slices: Vec<Slice>,
    pub warnings: Vec<Warning>,
}

pub fn run_stage_one(model: &ContractModel, config: &SlicerConfig) -> StageOne {
    let icfg = crate::build_icfg(model);
    let ipdg = crate::build_ipdg(model, &icfg);
    let effects = Effects::new(model);
    let criteria = find_criteria(model, &ipdg, config);
    let slices: Vec<Slice> = criteria.iter().map(|c| backward_slice(&ipdg, c)).collect();
    let warnings = slices
        .iter()
        .filter_map(|s| check_cei(model, &icfg, &ipdg, &effects, s, config))
        .collect();
    StageOne {
        icfg,
        ipdg,
        criteria,
        slices,
        warnings,
    }
}
