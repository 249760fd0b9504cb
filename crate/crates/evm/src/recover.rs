//! Orphan-jump resolution by constant propagation over predecessor paths.
//!
//! A jump whose target is not pushed inside its own block takes the target
//! from the entry stack. We follow that stack slot backwards through
//! predecessor blocks until some block defines it as a constant that is left
//! on the stack unused.
//!
//! Walking back across a jump edge `P -> B` also learns something about `P`:
//! its own jump target must have been `start(B)`. When that target is itself
//! an entry-stack slot of `P` it becomes a pending constraint, and a path is
//! dropped as soon as a constant contradicts one. Without this, a shared
//! callee's return address would leak into every caller that reaches it.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ruint::aliases::U256;

use crate::cfg::{BlockId, Cfg, Diagnostic, Edge, EdgeKind, EdgeOrigin, JumpClass, TerminatorKind};
use crate::ssa::{to_ssa, ExitSlot, SsaBlock, ValueId, ValueOrigin};

#[derive(Clone, Debug)]
pub struct RecoveryConfig {
    /// Maximum number of blocks on one backward path.
    pub max_depth: usize,
    /// Maximum number of search states per orphan jump.
    pub max_states: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            max_depth: 64,
            max_states: 50_000,
        }
    }
}

/// Per-iteration sizes, for checking monotonicity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecoveryTrace {
    pub edge_counts: Vec<usize>,
    pub unresolved_counts: Vec<usize>,
}

impl RecoveryTrace {
    pub fn iterations(&self) -> usize {
        self.edge_counts.len().saturating_sub(1)
    }
}

pub type SsaMap = BTreeMap<BlockId, SsaBlock>;

pub fn ssa_map(cfg: &Cfg) -> SsaMap {
    cfg.blocks.values().map(|b| (b.id, to_ssa(b))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Track {
    Const(U256),
    Entry(usize),
    Opaque,
}

fn track_value(ssa: &SsaBlock, mut v: ValueId) -> Track {
    loop {
        match &ssa.value(v).origin {
            ValueOrigin::Constant(c) => return Track::Const(*c),
            ValueOrigin::StackInput(d) => return Track::Entry(*d),
            ValueOrigin::Computed { opcode, operands } if opcode.dup_depth().is_some() => {
                v = operands[0];
            }
            ValueOrigin::Computed { .. } => return Track::Opaque,
        }
    }
}

fn track_slot(ssa: &SsaBlock, depth: usize) -> Track {
    match ssa.exit_slot(depth) {
        ExitSlot::Value(v) => track_value(ssa, v),
        ExitSlot::EntryDepth(d) => Track::Entry(d),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Query {
    Depth(usize),
    Found(U256),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct State {
    block: BlockId,
    query: Query,
    /// Entry-stack depth of `block` and the value it must hold.
    constraints: Vec<(usize, U256)>,
}

fn normalize(mut cons: Vec<(usize, U256)>) -> Option<Vec<(usize, U256)>> {
    cons.sort();
    cons.dedup();
    if cons.windows(2).any(|w| w[0].0 == w[1].0) {
        return None;
    }
    Some(cons)
}

/// Constants that can reach the jump-target position of `block`'s orphan
/// jump. Empty means not found.
pub fn find_unused_var(block: BlockId, cfg: &Cfg, ssa: &SsaMap) -> BTreeSet<U256> {
    find_unused_var_with(block, cfg, ssa, &cfg.predecessor_map(), &RecoveryConfig::default())
}

pub fn find_unused_var_with(
    block: BlockId,
    cfg: &Cfg,
    ssa: &SsaMap,
    preds: &BTreeMap<BlockId, Vec<Edge>>,
    config: &RecoveryConfig,
) -> BTreeSet<U256> {
    let mut found = BTreeSet::new();
    let Some(target) = ssa[&block].jump_target else {
        return found;
    };
    let start_depth = match track_value(&ssa[&block], target) {
        Track::Const(c) => {
            found.insert(c);
            return found;
        }
        Track::Opaque => return found,
        Track::Entry(d) => d,
    };

    let mut seen: HashSet<State> = HashSet::new();
    let mut work: Vec<(State, usize)> = vec![(
        State {
            block,
            query: Query::Depth(start_depth),
            constraints: Vec::new(),
        },
        1,
    )];
    while let Some((state, depth)) = work.pop() {
        if seen.len() >= config.max_states {
            break;
        }
        if !seen.insert(state.clone()) {
            continue;
        }
        let incoming = preds.get(&state.block).map(Vec::as_slice).unwrap_or(&[]);
        if incoming.is_empty() || depth >= config.max_depth {
            // Nothing left that could refute a found constant.
            if let Query::Found(c) = state.query {
                found.insert(c);
            }
            continue;
        }
        let start = U256::from(cfg.block(state.block).start_offset);
        for edge in incoming {
            let pred = &ssa[&edge.source];
            let mut cons = Vec::new();
            let mut refuted = false;
            if edge.kind.is_jump_target() {
                if let Some(t) = pred.jump_target {
                    match track_value(pred, t) {
                        Track::Const(c) => refuted |= c != start,
                        Track::Entry(k) => cons.push((k, start)),
                        Track::Opaque => {}
                    }
                }
            }
            for &(d, expected) in &state.constraints {
                match track_slot(pred, d) {
                    Track::Const(c) => refuted |= c != expected,
                    Track::Entry(k) => cons.push((k, expected)),
                    Track::Opaque => {}
                }
            }
            if refuted {
                continue;
            }
            let query = match state.query {
                Query::Found(c) => Query::Found(c),
                Query::Depth(d) => match track_slot(pred, d) {
                    Track::Const(c) => Query::Found(c),
                    Track::Entry(k) => Query::Depth(k),
                    Track::Opaque => continue,
                },
            };
            let Some(constraints) = normalize(cons) else {
                continue;
            };
            if let Query::Found(c) = query {
                if constraints.is_empty() {
                    found.insert(c);
                    continue;
                }
            }
            let next = State {
                block: edge.source,
                query,
                constraints,
            };
            if !seen.contains(&next) {
                work.push((next, depth + 1));
            }
        }
    }
    found
}

fn orphan_blocks(cfg: &Cfg) -> Vec<(BlockId, EdgeKind)> {
    cfg.blocks
        .values()
        .filter_map(|b| match b.terminator_kind {
            TerminatorKind::Jump(JumpClass::Orphan) => Some((b.id, EdgeKind::Jump)),
            TerminatorKind::ConditionalJump(JumpClass::Orphan) => Some((b.id, EdgeKind::BranchTaken)),
            _ => None,
        })
        .collect()
}

/// Resolves orphan jumps until no new edge appears.
pub fn recover_cfg(cfg: Cfg) -> Cfg {
    recover_cfg_with(cfg, &RecoveryConfig::default()).0
}

pub fn recover_cfg_with(mut cfg: Cfg, config: &RecoveryConfig) -> (Cfg, RecoveryTrace) {
    let ssa = ssa_map(&cfg);
    let orphans = orphan_blocks(&cfg);
    let mut trace = RecoveryTrace::default();
    trace.edge_counts.push(cfg.edges.len());
    trace.unresolved_counts.push(cfg.unresolved.len());
    let limit = cfg.blocks.len() * cfg.blocks.len() + 1;
    let mut rejected: BTreeSet<(BlockId, U256)> = BTreeSet::new();
    for _ in 0..limit {
        let preds = cfg.predecessor_map();
        let mut changed = false;
        for &(id, kind) in &orphans {
            for c in find_unused_var_with(id, &cfg, &ssa, &preds, config) {
                let target = u64::try_from(c).ok().and_then(|t| cfg.jumpdest_block(t));
                match target {
                    Some(t) => changed |= cfg.add_edge(id, t, kind, EdgeOrigin::Recovered),
                    None => {
                        if rejected.insert((id, c)) {
                            cfg.diagnostics.push(match u64::try_from(c) {
                                Ok(target) => Diagnostic::InvalidJumpTarget { block: id, target },
                                Err(_) => Diagnostic::OutOfRangeTarget { block: id },
                            });
                        }
                    }
                }
            }
        }
        let resolved: Vec<BlockId> = cfg
            .unresolved
            .iter()
            .copied()
            .filter(|b| cfg.has_jump_edge(*b))
            .collect();
        for b in resolved {
            cfg.unresolved.remove(&b);
        }
        if !changed {
            break;
        }
        trace.edge_counts.push(cfg.edges.len());
        trace.unresolved_counts.push(cfg.unresolved.len());
    }
    (cfg, trace)
}

/// Disassembles and builds the complete CFG.
pub fn build_cfg(code: &[u8]) -> Cfg {
    recover_cfg(crate::cfg::build_partial_cfg(code))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_partial_cfg;

    #[test]
    fn local_push_is_found_without_walk() {
        // PUSH1 0x08, JUMP is a push jump; wrap it so it is orphan:
        // PUSH1 0x08, DUP1, POP, JUMP -> target is a DUP of a constant.
        let code = [0x60, 0x08, 0x80, 0x50, 0x56, 0x00, 0x00, 0x00, 0x5b, 0x00];
        let cfg = build_partial_cfg(&code);
        let ssa = ssa_map(&cfg);
        assert_eq!(cfg.unresolved, BTreeSet::from([BlockId(0)]));
        assert_eq!(find_unused_var(BlockId(0), &cfg, &ssa), BTreeSet::from([U256::from(8)]));
        let out = recover_cfg(cfg);
        assert!(out.unresolved.is_empty());
    }

    #[test]
    fn calldata_target_is_not_found() {
        // PUSH1 0, CALLDATALOAD, JUMP
        let code = [0x60, 0x00, 0x35, 0x56];
        let cfg = build_partial_cfg(&code);
        let ssa = ssa_map(&cfg);
        assert!(find_unused_var(BlockId(0), &cfg, &ssa).is_empty());
        let out = recover_cfg(cfg);
        assert_eq!(out.unresolved, BTreeSet::from([BlockId(0)]));
    }

    #[test]
    fn empty_unresolved_is_identity() {
        let code = [0x60, 0x03, 0x56, 0x5b, 0x00];
        let cfg = build_partial_cfg(&code);
        let (out, trace) = recover_cfg_with(cfg.clone(), &RecoveryConfig::default());
        assert_eq!(out, cfg);
        assert_eq!(trace.iterations(), 0);
    }

    #[test]
    fn non_jumpdest_target_is_rejected() {
        // PUSH1 0x05, PUSH1 0x06, JUMP ; 0x05: STOP ; 0x06: JUMPDEST, JUMP(orphan)
        let code = [0x60, 0x05, 0x60, 0x06, 0x56, 0x00, 0x5b, 0x56];
        let out = recover_cfg(build_partial_cfg(&code));
        let jump_block = out.block_at(6).unwrap();
        assert!(out.unresolved.contains(&jump_block));
        assert!(out
            .diagnostics
            .contains(&Diagnostic::InvalidJumpTarget { block: jump_block, target: 5 }));
    }
}
