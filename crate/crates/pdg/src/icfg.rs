//! Statement-level control flow, per function and stitched across calls.

use std::collections::{BTreeMap, BTreeSet};

use ceiscan_frontend::{CallSite, ContractModel, FunctionId, Stmt, StmtId};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Sequential,
    Branch,
    CallEntry,
    CallReturn,
}

/// Control flow inside one function, from its entry to its exit node.
#[derive(Clone, Debug)]
pub struct FunctionCfg {
    pub function: FunctionId,
    pub entry: StmtId,
    pub exit: StmtId,
    pub nodes: Vec<StmtId>,
    pub edges: BTreeMap<(StmtId, StmtId), EdgeKind>,
    /// Edges into the exit taken when the transaction aborts.
    pub revert: BTreeSet<(StmtId, StmtId)>,
}

impl FunctionCfg {
    pub fn successors(&self, n: StmtId) -> impl Iterator<Item = StmtId> + '_ {
        self.edges.range((n, StmtId(0))..=(n, StmtId(u32::MAX))).map(|((_, d), _)| *d)
    }

    /// Graph used for control dependence: every edge, plus entry -> exit,
    /// plus an edge to the exit from nodes that could never reach it.
    pub fn dependence_graph(&self) -> BTreeMap<StmtId, BTreeSet<StmtId>> {
        let mut succ: BTreeMap<StmtId, BTreeSet<StmtId>> = self.nodes.iter().map(|n| (*n, BTreeSet::new())).collect();
        for (a, b) in self.edges.keys() {
            succ.get_mut(a).expect("node").insert(*b);
        }
        succ.get_mut(&self.entry).expect("entry").insert(self.exit);
        let mut reaches = BTreeSet::from([self.exit]);
        let mut changed = true;
        while changed {
            changed = false;
            for (n, s) in &succ {
                if !reaches.contains(n) && s.iter().any(|x| reaches.contains(x)) {
                    reaches.insert(*n);
                    changed = true;
                }
            }
        }
        for n in &self.nodes {
            if !reaches.contains(n) {
                succ.get_mut(n).expect("node").insert(self.exit);
            }
        }
        succ
    }
}

#[derive(Clone, Debug)]
pub struct Icfg {
    pub nodes: BTreeSet<StmtId>,
    pub edges: BTreeSet<(StmtId, StmtId, EdgeKind)>,
    pub revert_edges: BTreeSet<(StmtId, StmtId)>,
    /// Externally callable functions with a body.
    pub entry_points: Vec<FunctionId>,
    pub functions: BTreeMap<FunctionId, FunctionCfg>,
}

impl Icfg {
    pub fn successors(&self, n: StmtId) -> impl Iterator<Item = (StmtId, EdgeKind)> + '_ {
        self.edges
            .range((n, StmtId(0), EdgeKind::Sequential)..=(n, StmtId(u32::MAX), EdgeKind::CallReturn))
            .map(|(_, d, k)| (*d, *k))
    }

    pub fn is_revert(&self, a: StmtId, b: StmtId) -> bool {
        self.revert_edges.contains(&(a, b))
    }

    /// Resolved callee with a body, if the statement calls one.
    pub fn callee(&self, model: &ContractModel, s: StmtId) -> Option<FunctionId> {
        let f = model.stmt(s).call.as_ref().and_then(CallSite::resolved)?;
        self.functions.contains_key(&f).then_some(f).filter(|f| model.function(*f).body.is_some())
    }
}

struct Builder {
    edges: BTreeMap<(StmtId, StmtId), EdgeKind>,
    revert: BTreeSet<(StmtId, StmtId)>,
    breaks: Vec<Vec<StmtId>>,
    continues: Vec<Vec<StmtId>>,
    returns: Vec<Vec<StmtId>>,
    exit: StmtId,
}

type Frontier = Vec<(StmtId, EdgeKind)>;

impl Builder {
    fn connect(&mut self, preds: &Frontier, to: StmtId) {
        for (p, k) in preds {
            self.edges.entry((*p, to)).or_insert(*k);
        }
    }

    fn build(&mut self, s: &Stmt, preds: Frontier) -> Frontier {
        match s {
            Stmt::Node(n) => {
                self.connect(&preds, *n);
                vec![(*n, EdgeKind::Sequential)]
            }
            Stmt::Block(items) => items.iter().fold(preds, |p, i| self.build(i, p)),
            Stmt::If { head, then, els } => {
                self.connect(&preds, *head);
                let mut out = self.build(then, vec![(*head, EdgeKind::Branch)]);
                match els {
                    Some(e) => out.extend(self.build(e, vec![(*head, EdgeKind::Branch)])),
                    None => out.push((*head, EdgeKind::Branch)),
                }
                out
            }
            Stmt::Loop {
                head,
                body,
                update,
                do_while,
            } => {
                self.breaks.push(Vec::new());
                self.continues.push(Vec::new());
                let body_out = if *do_while {
                    let mut into = preds;
                    into.push((*head, EdgeKind::Branch));
                    self.build(body, into)
                } else {
                    self.connect(&preds, *head);
                    self.build(body, vec![(*head, EdgeKind::Branch)])
                };
                let mut back = body_out;
                back.extend(self.continues.pop().expect("loop").into_iter().map(|c| (c, EdgeKind::Sequential)));
                let back = match update {
                    Some(u) => self.build(u, back),
                    None => back,
                };
                self.connect(&back, *head);
                let mut out = vec![(*head, EdgeKind::Branch)];
                out.extend(self.breaks.pop().expect("loop").into_iter().map(|b| (b, EdgeKind::Sequential)));
                out
            }
            Stmt::Return(n) => {
                self.connect(&preds, *n);
                self.returns.last_mut().expect("scope").push(*n);
                Vec::new()
            }
            Stmt::Break(n) => {
                self.connect(&preds, *n);
                if let Some(b) = self.breaks.last_mut() {
                    b.push(*n);
                }
                Vec::new()
            }
            Stmt::Continue(n) => {
                self.connect(&preds, *n);
                if let Some(c) = self.continues.last_mut() {
                    c.push(*n);
                }
                Vec::new()
            }
            Stmt::Revert(n) => {
                self.connect(&preds, *n);
                self.abort(*n);
                Vec::new()
            }
            Stmt::Require(n) => {
                self.connect(&preds, *n);
                self.abort(*n);
                vec![(*n, EdgeKind::Branch)]
            }
            Stmt::Scope(inner) => {
                self.returns.push(Vec::new());
                let mut out = self.build(inner, preds);
                out.extend(self.returns.pop().expect("scope").into_iter().map(|r| (r, EdgeKind::Sequential)));
                out
            }
        }
    }

    fn abort(&mut self, n: StmtId) {
        self.edges.insert((n, self.exit), EdgeKind::Branch);
        self.revert.insert((n, self.exit));
    }
}

pub fn function_cfg(model: &ContractModel, f: FunctionId) -> FunctionCfg {
    let func = model.function(f);
    let mut b = Builder {
        exit: func.exit,
        returns: vec![Vec::new()],
        edges: BTreeMap::new(),
        revert: BTreeSet::new(),
        breaks: Vec::new(),
        continues: Vec::new(),
    };
    let start = vec![(func.entry, EdgeKind::Sequential)];
    let mut out = match &func.body {
        Some(body) => b.build(body, start),
        None => start,
    };
    out.extend(b.returns.pop().expect("scope").into_iter().map(|r| (r, EdgeKind::Sequential)));
    b.connect(&out, func.exit);
    FunctionCfg {
        function: f,
        entry: func.entry,
        exit: func.exit,
        nodes: model.function_nodes(f),
        edges: b.edges,
        revert: b.revert,
    }
}

/// Per-function graphs stitched with call-entry/call-return edges for
/// resolved callees; calls to unknown code stay single opaque nodes.
pub fn build_icfg(model: &ContractModel) -> Icfg {
    let mut icfg = Icfg {
        nodes: BTreeSet::new(),
        edges: BTreeSet::new(),
        revert_edges: BTreeSet::new(),
        entry_points: Vec::new(),
        functions: BTreeMap::new(),
    };
    for func in &model.functions {
        let cfg = function_cfg(model, func.id);
        icfg.nodes.extend(cfg.nodes.iter().copied());
        icfg.edges.extend(cfg.edges.iter().map(|((a, b), k)| (*a, *b, *k)));
        icfg.revert_edges.extend(cfg.revert.iter().copied());
        if func.externally_callable() && func.body.is_some() {
            icfg.entry_points.push(func.id);
        }
        icfg.functions.insert(func.id, cfg);
    }
    let mut stitched = Vec::new();
    for s in &icfg.nodes {
        let Some(callee) = icfg.callee(model, *s) else { continue };
        let cfg = &icfg.functions[&model.stmt(*s).function];
        let callee_cfg = &icfg.functions[&callee];
        stitched.push((*s, callee_cfg.entry, EdgeKind::CallEntry));
        for succ in cfg.successors(*s) {
            if !cfg.revert.contains(&(*s, succ)) {
                stitched.push((callee_cfg.exit, succ, EdgeKind::CallReturn));
            }
        }
    }
    icfg.edges.extend(stitched);
    icfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_ranges_cover_all_kinds() {
        let mut icfg = Icfg {
            nodes: BTreeSet::from([StmtId(1), StmtId(2), StmtId(3)]),
            edges: BTreeSet::new(),
            revert_edges: BTreeSet::new(),
            entry_points: vec![],
            functions: BTreeMap::new(),
        };
        icfg.edges.insert((StmtId(1), StmtId(2), EdgeKind::Sequential));
        icfg.edges.insert((StmtId(1), StmtId(3), EdgeKind::CallReturn));
        icfg.edges.insert((StmtId(2), StmtId(3), EdgeKind::Branch));
        let s: Vec<_> = icfg.successors(StmtId(1)).collect();
        assert_eq!(s, vec![(StmtId(2), EdgeKind::Sequential), (StmtId(3), EdgeKind::CallReturn)]);
    }
}
