//! Basic blocks and the control-flow graph.
//!
//! `split_blocks` partitions a disassembly; `static_stack_emulate` wires up
//! every edge that is decidable from a single block (sequential flow and
//! push-jumps). Jumps whose target is not the immediately preceding PUSH are
//! orphan jumps and are left in [`Cfg::unresolved`] for
//! [`crate::recover::recover_cfg`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::disasm::Instruction;
use crate::opcode::Opcode;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub usize);

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How the target of a JUMP/JUMPI is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpClass {
    /// The jump is immediately preceded by a PUSH of its target.
    Push,
    /// The target comes from anywhere else on the stack.
    Orphan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminatorKind {
    /// Unconditional JUMP.
    Jump(JumpClass),
    /// JUMPI.
    ConditionalJump(JumpClass),
    /// The block ends because the next instruction is a JUMPDEST.
    Fallthrough,
    /// STOP, RETURN, REVERT, SELFDESTRUCT or INVALID.
    Halt,
}

impl TerminatorKind {
    pub fn jump_class(self) -> Option<JumpClass> {
        match self {
            TerminatorKind::Jump(c) | TerminatorKind::ConditionalJump(c) => Some(c),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TerminatorKind::Jump(JumpClass::Push)
            | TerminatorKind::ConditionalJump(JumpClass::Push) => "push-jump",
            TerminatorKind::Jump(JumpClass::Orphan)
            | TerminatorKind::ConditionalJump(JumpClass::Orphan) => "orphan-jump",
            TerminatorKind::Fallthrough => "fallthrough",
            TerminatorKind::Halt => "halt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: BlockId,
    pub start_offset: usize,
    pub instructions: Vec<Instruction>,
    pub terminator_kind: TerminatorKind,
}

impl BasicBlock {
    pub fn last(&self) -> &Instruction {
        self.instructions.last().expect("blocks are never empty")
    }

    pub fn end_offset(&self) -> usize {
        self.last().next_offset()
    }

    pub fn starts_with_jumpdest(&self) -> bool {
        self.instructions[0].opcode == Opcode::JUMPDEST
    }

    /// Target of a push-jump, read from the preceding PUSH.
    pub fn push_jump_target(&self) -> Option<usize> {
        if self.terminator_kind.jump_class() != Some(JumpClass::Push) {
            return None;
        }
        let push = &self.instructions[self.instructions.len() - 2];
        let value = push.push_value()?;
        usize::try_from(value).ok()
    }
}

/// Splits a disassembly into basic blocks. Block ids are assigned in offset
/// order.
pub fn split_blocks(instructions: &[Instruction]) -> Vec<BasicBlock> {
    let mut blocks = Vec::new();
    let mut current: Vec<Instruction> = Vec::new();
    let flush = |current: &mut Vec<Instruction>, blocks: &mut Vec<BasicBlock>| {
        if current.is_empty() {
            return;
        }
        let instructions = std::mem::take(current);
        let terminator_kind = classify_terminator(&instructions);
        blocks.push(BasicBlock {
            id: BlockId(blocks.len()),
            start_offset: instructions[0].offset,
            instructions,
            terminator_kind,
        });
    };
    for ins in instructions {
        if ins.opcode == Opcode::JUMPDEST {
            flush(&mut current, &mut blocks);
        }
        let ends = ins.opcode.ends_block();
        current.push(ins.clone());
        if ends {
            flush(&mut current, &mut blocks);
        }
    }
    flush(&mut current, &mut blocks);
    blocks
}

fn classify_terminator(instructions: &[Instruction]) -> TerminatorKind {
    let last = instructions.last().expect("non-empty");
    if last.opcode.is_jump() {
        let class = match instructions.len().checked_sub(2).map(|i| &instructions[i]) {
            Some(prev) if prev.opcode.is_push() => JumpClass::Push,
            _ => JumpClass::Orphan,
        };
        if last.opcode == Opcode::JUMP {
            TerminatorKind::Jump(class)
        } else {
            TerminatorKind::ConditionalJump(class)
        }
    } else if last.opcode.is_halt() {
        TerminatorKind::Halt
    } else {
        TerminatorKind::Fallthrough
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Sequential,
    Jump,
    BranchTaken,
    BranchFallthrough,
}

impl EdgeKind {
    pub fn label(self) -> &'static str {
        match self {
            EdgeKind::Sequential => "sequential",
            EdgeKind::Jump => "jump",
            EdgeKind::BranchTaken => "branch-taken",
            EdgeKind::BranchFallthrough => "branch-fallthrough",
        }
    }

    pub fn is_jump_target(self) -> bool {
        matches!(self, EdgeKind::Jump | EdgeKind::BranchTaken)
    }
}

/// Whether an edge was found by static emulation or by orphan-jump recovery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeOrigin {
    Static,
    Recovered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: BlockId,
    pub target: BlockId,
    pub kind: EdgeKind,
    pub origin: EdgeOrigin,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    /// A jump target resolved to an offset that does not start a JUMPDEST block.
    InvalidJumpTarget { block: BlockId, target: u64 },
    /// A jump target that does not fit the code size at all.
    OutOfRangeTarget { block: BlockId },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::InvalidJumpTarget { block, target } => write!(
                f,
                "block {block}: jump target {target:#x} is not a JUMPDEST"
            ),
            Diagnostic::OutOfRangeTarget { block } => {
                write!(f, "block {block}: jump target out of range")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Cfg {
    pub blocks: BTreeMap<BlockId, BasicBlock>,
    pub edges: BTreeSet<Edge>,
    pub unresolved: BTreeSet<BlockId>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip)]
    by_offset: BTreeMap<usize, BlockId>,
}

impl Cfg {
    pub fn new(blocks: Vec<BasicBlock>) -> Self {
        let by_offset = blocks.iter().map(|b| (b.start_offset, b.id)).collect();
        Cfg {
            blocks: blocks.into_iter().map(|b| (b.id, b)).collect(),
            edges: BTreeSet::new(),
            unresolved: BTreeSet::new(),
            diagnostics: Vec::new(),
            by_offset,
        }
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[&id]
    }

    /// Block starting exactly at `offset`.
    pub fn block_at(&self, offset: usize) -> Option<BlockId> {
        self.by_offset.get(&offset).copied()
    }

    /// Block containing the instruction at `offset`.
    pub fn block_containing(&self, offset: usize) -> Option<BlockId> {
        let (_, id) = self.by_offset.range(..=offset).next_back()?;
        let block = self.block(*id);
        (offset < block.end_offset()).then_some(*id)
    }

    /// Block starting at `offset` with a JUMPDEST, i.e. a legal jump target.
    pub fn jumpdest_block(&self, offset: u64) -> Option<BlockId> {
        let offset = usize::try_from(offset).ok()?;
        self.block_at(offset)
            .filter(|id| self.block(*id).starts_with_jumpdest())
    }

    pub fn successors(&self, id: BlockId) -> impl Iterator<Item = &Edge> + '_ {
        let lo = Edge {
            source: id,
            target: BlockId(0),
            kind: EdgeKind::Sequential,
            origin: EdgeOrigin::Static,
        };
        self.edges.range(lo..).take_while(move |e| e.source == id)
    }

    pub fn predecessors(&self, id: BlockId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.target == id)
    }

    /// Predecessor index built once for repeated backward walks.
    pub fn predecessor_map(&self) -> BTreeMap<BlockId, Vec<Edge>> {
        let mut map: BTreeMap<BlockId, Vec<Edge>> = BTreeMap::new();
        for e in &self.edges {
            map.entry(e.target).or_default().push(*e);
        }
        map
    }

    pub fn has_jump_edge(&self, id: BlockId) -> bool {
        self.successors(id).any(|e| e.kind.is_jump_target())
    }

    /// Adds an edge unless an edge between the same blocks with the same kind
    /// already exists. Returns whether the edge is new.
    pub fn add_edge(&mut self, source: BlockId, target: BlockId, kind: EdgeKind, origin: EdgeOrigin) -> bool {
        let exists = self
            .successors(source)
            .any(|e| e.target == target && e.kind == kind);
        if exists {
            return false;
        }
        self.edges.insert(Edge {
            source,
            target,
            kind,
            origin,
        })
    }

    /// Blocks terminated by JUMP or JUMPI.
    pub fn jump_blocks(&self) -> impl Iterator<Item = &BasicBlock> + '_ {
        self.blocks
            .values()
            .filter(|b| b.terminator_kind.jump_class().is_some())
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.values().map(|b| b.instructions.len()).sum()
    }

    /// Graphviz rendering: one node per block labelled `id@offset`, edges
    /// labelled by kind; recovered edges are drawn blue and dashed.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name.replace('"', "'"));
        let _ = writeln!(out, "  node [shape=box, fontname=monospace];");
        for b in self.blocks.values() {
            let shape = if self.unresolved.contains(&b.id) {
                ", style=filled, fillcolor=lightblue"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "  b{} [label=\"{}@{:#x}\"{}];",
                b.id.0, b.id.0, b.start_offset, shape
            );
        }
        for e in &self.edges {
            let style = match e.origin {
                EdgeOrigin::Static => String::new(),
                EdgeOrigin::Recovered => ", color=blue, style=dashed".to_string(),
            };
            let _ = writeln!(
                out,
                "  b{} -> b{} [label=\"{}\"{}];",
                e.source.0,
                e.target.0,
                e.kind.label(),
                style
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the partial CFG: sequential/fallthrough edges, push-jump edges and
/// both arms of push-JUMPIs. Orphan jumps and push-jumps to non-JUMPDEST
/// offsets end up in `unresolved`.
pub fn static_stack_emulate(blocks: Vec<BasicBlock>) -> Cfg {
    let next_of: BTreeMap<BlockId, BlockId> = blocks
        .windows(2)
        .map(|w| (w[0].id, w[1].id))
        .collect();
    let mut cfg = Cfg::new(blocks);
    let ids: Vec<BlockId> = cfg.blocks.keys().copied().collect();
    for id in ids {
        let block = cfg.block(id).clone();
        let next = next_of.get(&id).copied();
        match block.terminator_kind {
            TerminatorKind::Halt => {}
            TerminatorKind::Fallthrough => {
                if let Some(next) = next {
                    cfg.add_edge(id, next, EdgeKind::Sequential, EdgeOrigin::Static);
                }
            }
            TerminatorKind::Jump(class) | TerminatorKind::ConditionalJump(class) => {
                let conditional = matches!(block.terminator_kind, TerminatorKind::ConditionalJump(_));
                if conditional {
                    if let Some(next) = next {
                        cfg.add_edge(id, next, EdgeKind::BranchFallthrough, EdgeOrigin::Static);
                    }
                }
                let kind = if conditional {
                    EdgeKind::BranchTaken
                } else {
                    EdgeKind::Jump
                };
                match class {
                    JumpClass::Orphan => {
                        cfg.unresolved.insert(id);
                    }
                    JumpClass::Push => {
                        let push = &block.instructions[block.instructions.len() - 2];
                        let value = push.push_value().expect("push has a value");
                        match u64::try_from(value) {
                            Ok(target) => match cfg.jumpdest_block(target) {
                                Some(t) => {
                                    cfg.add_edge(id, t, kind, EdgeOrigin::Static);
                                }
                                None => {
                                    cfg.unresolved.insert(id);
                                    cfg.diagnostics
                                        .push(Diagnostic::InvalidJumpTarget { block: id, target });
                                }
                            },
                            Err(_) => {
                                cfg.unresolved.insert(id);
                                cfg.diagnostics.push(Diagnostic::OutOfRangeTarget { block: id });
                            }
                        }
                    }
                }
            }
        }
    }
    cfg
}

/// Disassembles, splits and statically emulates in one step.
pub fn build_partial_cfg(code: &[u8]) -> Cfg {
    static_stack_emulate(split_blocks(&crate::disasm::disassemble(code)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disasm::disassemble;

    fn blocks(code: &[u8]) -> Vec<BasicBlock> {
        split_blocks(&disassemble(code))
    }

    #[test]
    fn split_at_jump_and_jumpdest() {
        // PUSH1 0x03, JUMP, JUMPDEST, STOP
        let b = blocks(&[0x60, 0x03, 0x56, 0x5b, 0x00]);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].instructions.len(), 2);
        assert_eq!(b[0].terminator_kind, TerminatorKind::Jump(JumpClass::Push));
        assert_eq!(b[1].start_offset, 3);
        assert_eq!(b[1].instructions[0].opcode, Opcode::JUMPDEST);
        assert_eq!(b[1].terminator_kind, TerminatorKind::Halt);
    }

    #[test]
    fn single_stop() {
        let b = blocks(&[0x00]);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].terminator_kind, TerminatorKind::Halt);
    }

    #[test]
    fn fallthrough_into_jumpdest() {
        // PUSH1 1, JUMPDEST, STOP
        let b = blocks(&[0x60, 0x01, 0x5b, 0x00]);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].terminator_kind, TerminatorKind::Fallthrough);
        let cfg = static_stack_emulate(b);
        assert_eq!(cfg.edges.len(), 1);
        let e = cfg.edges.iter().next().unwrap();
        assert_eq!((e.source, e.target, e.kind), (BlockId(0), BlockId(1), EdgeKind::Sequential));
    }

    #[test]
    fn push_jump_gets_edge() {
        // PUSH1 0x04, JUMP, INVALID, JUMPDEST, STOP
        let cfg = build_partial_cfg(&[0x60, 0x04, 0x56, 0xfe, 0x5b, 0x00]);
        assert!(cfg.unresolved.is_empty());
        let target = cfg.block_at(4).unwrap();
        assert!(cfg
            .edges
            .iter()
            .any(|e| e.source == BlockId(0) && e.target == target && e.kind == EdgeKind::Jump));
    }

    #[test]
    fn orphan_jump_after_swap_is_unresolved() {
        // PUSH1 0x05, PUSH1 0x00, SWAP1, JUMP, JUMPDEST, STOP
        let cfg = build_partial_cfg(&[0x60, 0x05, 0x60, 0x00, 0x90, 0x56, 0x5b, 0x00]);
        assert!(cfg.unresolved.contains(&BlockId(0)));
        assert!(!cfg.has_jump_edge(BlockId(0)));
    }

    #[test]
    fn dup_then_jump_is_orphan() {
        let b = blocks(&[0x80, 0x56]);
        assert_eq!(b[0].terminator_kind, TerminatorKind::Jump(JumpClass::Orphan));
    }

    #[test]
    fn jumpi_gets_both_arms() {
        // PUSH1 1, PUSH1 0x07, JUMPI, STOP, INVALID, JUMPDEST, STOP
        let cfg = build_partial_cfg(&[0x60, 0x01, 0x60, 0x07, 0x57, 0x00, 0xfe, 0x5b, 0x00]);
        let kinds: Vec<_> = cfg.successors(BlockId(0)).map(|e| (e.target, e.kind)).collect();
        assert!(kinds.contains(&(BlockId(1), EdgeKind::BranchFallthrough)));
        assert!(kinds.contains(&(cfg.block_at(7).unwrap(), EdgeKind::BranchTaken)));
    }

    #[test]
    fn push_jump_to_non_jumpdest_is_diagnosed() {
        // PUSH1 0x03, JUMP, STOP (offset 3 is STOP, not JUMPDEST)
        let cfg = build_partial_cfg(&[0x60, 0x03, 0x56, 0x00]);
        assert!(cfg.unresolved.contains(&BlockId(0)));
        assert_eq!(
            cfg.diagnostics,
            vec![Diagnostic::InvalidJumpTarget {
                block: BlockId(0),
                target: 3
            }]
        );
    }

    #[test]
    fn dot_labels() {
        let cfg = build_partial_cfg(&[0x60, 0x04, 0x56, 0xfe, 0x5b, 0x00]);
        let dot = cfg.to_dot("t");
        assert!(dot.contains("label=\"0@0x0\""));
        assert!(dot.contains("label=\"jump\""));
    }

    #[test]
    fn block_lookup_by_offset() {
        let cfg = build_partial_cfg(&[0x60, 0x04, 0x56, 0xfe, 0x5b, 0x00]);
        assert_eq!(cfg.block_containing(1), Some(BlockId(0)));
        assert_eq!(cfg.block_containing(5), cfg.block_at(4));
        assert_eq!(cfg.block_containing(99), None);
    }
}
