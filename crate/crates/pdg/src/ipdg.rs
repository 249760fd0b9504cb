//! Dependence graph over I-CFG statements: control, data, and call
//! dependences.

use std::collections::{BTreeMap, BTreeSet};

use ceiscan_frontend::{ContractModel, StmtId, VarRef};
use serde::Serialize;

use crate::icfg::{FunctionCfg, Icfg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepKind {
    Control,
    Data,
    /// Call site to callee entry, and callee exit back to the call site.
    Call,
}

#[derive(Clone, Debug)]
pub struct Ipdg {
    pub nodes: BTreeSet<StmtId>,
    pub edges: BTreeSet<(StmtId, StmtId, DepKind)>,
    preds: BTreeMap<StmtId, Vec<(StmtId, DepKind)>>,
}

impl Ipdg {
    pub fn new(nodes: BTreeSet<StmtId>, edges: BTreeSet<(StmtId, StmtId, DepKind)>) -> Self {
        let mut preds: BTreeMap<StmtId, Vec<(StmtId, DepKind)>> = BTreeMap::new();
        for (a, b, k) in &edges {
            preds.entry(*b).or_default().push((*a, *k));
        }
        Ipdg { nodes, edges, preds }
    }

    pub fn predecessors(&self, n: StmtId) -> &[(StmtId, DepKind)] {
        self.preds.get(&n).map_or(&[], Vec::as_slice)
    }

    pub fn edges_of(&self, kind: DepKind) -> BTreeSet<(StmtId, StmtId)> {
        self.edges.iter().filter(|e| e.2 == kind).map(|e| (e.0, e.1)).collect()
    }

    /// Nodes backward-reachable from `roots`, roots included.
    pub fn backward_closure(&self, roots: impl IntoIterator<Item = StmtId>) -> BTreeSet<StmtId> {
        let mut seen = BTreeSet::new();
        let mut work: Vec<StmtId> = roots.into_iter().collect();
        while let Some(n) = work.pop() {
            if seen.insert(n) {
                work.extend(self.predecessors(n).iter().map(|(p, _)| *p));
            }
        }
        seen
    }
}

/// Post-dominator sets by iterative intersection.
pub fn post_dominators(cfg: &FunctionCfg) -> BTreeMap<StmtId, BTreeSet<StmtId>> {
    let succ = cfg.dependence_graph();
    let all: BTreeSet<StmtId> = cfg.nodes.iter().copied().collect();
    let mut pdom: BTreeMap<StmtId, BTreeSet<StmtId>> = all.iter().map(|n| (*n, all.clone())).collect();
    pdom.insert(cfg.exit, BTreeSet::from([cfg.exit]));
    let mut changed = true;
    while changed {
        changed = false;
        for n in cfg.nodes.iter().rev() {
            if *n == cfg.exit {
                continue;
            }
            let mut next: Option<BTreeSet<StmtId>> = None;
            for s in &succ[n] {
                next = Some(match next {
                    None => pdom[s].clone(),
                    Some(acc) => acc.intersection(&pdom[s]).copied().collect(),
                });
            }
            let mut next = next.unwrap_or_default();
            next.insert(*n);
            if next != pdom[n] {
                pdom.insert(*n, next);
                changed = true;
            }
        }
    }
    pdom
}

/// Control dependences `(a, b)`: `b` runs or not depending on the branch
/// taken at `a`. Walks the post-dominator tree from each successor up to
/// the branch node's immediate post-dominator.
pub fn control_dependences(cfg: &FunctionCfg) -> BTreeSet<(StmtId, StmtId)> {
    let pdom = post_dominators(cfg);
    let ipdom: BTreeMap<StmtId, StmtId> = pdom
        .iter()
        .filter_map(|(n, set)| {
            set.iter()
                .filter(|d| *d != n)
                .max_by_key(|d| pdom[*d].len())
                .map(|d| (*n, *d))
        })
        .collect();
    let succ = cfg.dependence_graph();
    let mut out = BTreeSet::new();
    for (a, ss) in &succ {
        let stop = ipdom.get(a).copied();
        for s in ss {
            let mut runner = Some(*s);
            while let Some(r) = runner {
                if Some(r) == stop {
                    break;
                }
                out.insert((*a, r));
                runner = ipdom.get(&r).copied();
            }
        }
    }
    out
}

struct Def {
    node: StmtId,
    var: VarRef,
}

/// Reaching definitions over the I-CFG without abort edges; `(a, b)` when a
/// definition at `a` reaches a read at `b` that may alias it.
pub fn data_dependences(model: &ContractModel, icfg: &Icfg) -> BTreeSet<(StmtId, StmtId)> {
    let mut defs: Vec<Def> = Vec::new();
    let mut gen: BTreeMap<StmtId, Vec<usize>> = BTreeMap::new();
    for n in &icfg.nodes {
        for w in &model.stmt(*n).writes {
            gen.entry(*n).or_default().push(defs.len());
            defs.push(Def { node: *n, var: w.clone() });
        }
    }
    let words = defs.len().div_ceil(64);
    let bit = |set: &mut Vec<u64>, i: usize| set[i / 64] |= 1 << (i % 64);
    let has = |set: &[u64], i: usize| set[i / 64] >> (i % 64) & 1 == 1;

    let mut kill: BTreeMap<StmtId, Vec<u64>> = BTreeMap::new();
    for n in &icfg.nodes {
        let writes = &model.stmt(*n).writes;
        let mut k = vec![0u64; words];
        for (i, d) in defs.iter().enumerate() {
            if writes.iter().any(|w| w.kills(&d.var)) {
                bit(&mut k, i);
            }
        }
        kill.insert(*n, k);
    }

    let mut preds: BTreeMap<StmtId, Vec<StmtId>> = BTreeMap::new();
    for (a, b, _) in &icfg.edges {
        if !icfg.is_revert(*a, *b) {
            preds.entry(*b).or_default().push(*a);
        }
    }
    let mut out: BTreeMap<StmtId, Vec<u64>> = icfg.nodes.iter().map(|n| (*n, vec![0u64; words])).collect();
    let mut input: BTreeMap<StmtId, Vec<u64>> = out.clone();
    let mut work: Vec<StmtId> = icfg.nodes.iter().rev().copied().collect();
    let mut queued: BTreeSet<StmtId> = icfg.nodes.clone();
    let mut succs: BTreeMap<StmtId, Vec<StmtId>> = BTreeMap::new();
    for (b, ps) in &preds {
        for a in ps {
            succs.entry(*a).or_default().push(*b);
        }
    }
    while let Some(n) = work.pop() {
        queued.remove(&n);
        let mut inn = vec![0u64; words];
        for p in preds.get(&n).into_iter().flatten() {
            for (x, y) in inn.iter_mut().zip(&out[p]) {
                *x |= y;
            }
        }
        let k = &kill[&n];
        let mut o: Vec<u64> = inn.iter().zip(k).map(|(i, k)| i & !k).collect();
        for g in gen.get(&n).into_iter().flatten() {
            bit(&mut o, *g);
        }
        input.insert(n, inn);
        if o != out[&n] {
            out.insert(n, o);
            for s in succs.get(&n).into_iter().flatten() {
                if queued.insert(*s) {
                    work.push(*s);
                }
            }
        }
    }

    let mut edges = BTreeSet::new();
    for n in &icfg.nodes {
        let reads = &model.stmt(*n).reads;
        if reads.is_empty() {
            continue;
        }
        let inn = &input[n];
        for (i, d) in defs.iter().enumerate() {
            if has(inn, i) && reads.iter().any(|r| d.var.may_alias(r)) {
                edges.insert((d.node, *n));
            }
        }
    }
    edges
}

pub fn build_ipdg(model: &ContractModel, icfg: &Icfg) -> Ipdg {
    let mut edges = BTreeSet::new();
    for cfg in icfg.functions.values() {
        edges.extend(control_dependences(cfg).into_iter().map(|(a, b)| (a, b, DepKind::Control)));
    }
    edges.extend(data_dependences(model, icfg).into_iter().map(|(a, b)| (a, b, DepKind::Data)));
    for s in &icfg.nodes {
        if let Some(f) = icfg.callee(model, *s) {
            let callee = &icfg.functions[&f];
            edges.insert((*s, callee.entry, DepKind::Call));
            edges.insert((callee.exit, *s, DepKind::Call));
        }
    }
    Ipdg::new(icfg.nodes.clone(), edges)
}
