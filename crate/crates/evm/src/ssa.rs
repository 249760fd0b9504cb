//! Per-block single-assignment form of stack effects.
//!
//! Each block is simulated over an unbounded symbolic stack. Every value that
//! appears on the stack is defined exactly once, either by a PUSH, by reading
//! below the block's entry stack (a *stack input*), or by an instruction.
//! Arithmetic over constant operands is folded so jump targets that are
//! computed inside a block still show up as constants.

use std::fmt;

use ruint::aliases::U256;
use serde::Serialize;

use crate::arith;
use crate::cfg::{BasicBlock, BlockId};
use crate::opcode::Opcode;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ValueId {
    pub block: BlockId,
    pub index: usize,
}

impl fmt::Debug for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}.{}", self.block.0, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ValueOrigin {
    Constant(U256),
    /// The value found `depth` slots below the top of the entry stack.
    StackInput(usize),
    Computed {
        opcode: Opcode,
        operands: Vec<ValueId>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SsaValue {
    pub id: ValueId,
    pub def_block: BlockId,
    pub origin: ValueOrigin,
    pub used: bool,
}

impl SsaValue {
    pub fn constant(&self) -> Option<U256> {
        match self.origin {
            ValueOrigin::Constant(c) => Some(c),
            _ => None,
        }
    }
}

/// Where a slot of the exit stack comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitSlot {
    Value(ValueId),
    /// Untouched entry-stack slot at this depth.
    EntryDepth(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SsaBlock {
    pub block_id: BlockId,
    pub values: Vec<SsaValue>,
    /// Stack at block exit, bottom first, after the terminator popped its
    /// operands.
    pub exit_stack: Vec<ValueId>,
    /// Number of entry-stack slots the block reads.
    pub inputs: usize,
    pub jump_target: Option<ValueId>,
    pub jump_condition: Option<ValueId>,
}

/// Folded opcodes; everything else is an opaque computation.
const FOLDABLE: [Opcode; 11] = [
    Opcode::ADD,
    Opcode::SUB,
    Opcode::MUL,
    Opcode::DIV,
    Opcode::EXP,
    Opcode::AND,
    Opcode::OR,
    Opcode::XOR,
    Opcode::SHL,
    Opcode::SHR,
    Opcode::NOT,
];

impl SsaBlock {
    pub fn value(&self, id: ValueId) -> &SsaValue {
        debug_assert_eq!(id.block, self.block_id);
        &self.values[id.index]
    }

    /// Exit-stack slot `depth` positions below the top.
    pub fn exit_slot(&self, depth: usize) -> ExitSlot {
        let len = self.exit_stack.len();
        if depth < len {
            ExitSlot::Value(self.exit_stack[len - 1 - depth])
        } else {
            ExitSlot::EntryDepth(depth - len + self.inputs)
        }
    }

    /// Constant values of the exit stack, top first; `None` for non-constants.
    pub fn exit_constants(&self) -> Vec<Option<U256>> {
        self.exit_stack
            .iter()
            .rev()
            .map(|v| self.value(*v).constant())
            .collect()
    }
}

struct Builder {
    block: BlockId,
    values: Vec<SsaValue>,
    stack: Vec<ValueId>,
    inputs: usize,
}

impl Builder {
    fn define(&mut self, origin: ValueOrigin) -> ValueId {
        let id = ValueId {
            block: self.block,
            index: self.values.len(),
        };
        self.values.push(SsaValue {
            id,
            def_block: self.block,
            origin,
            used: false,
        });
        id
    }

    /// Makes sure at least `n` slots are on the simulated stack, materialising
    /// entry-stack inputs at the bottom.
    fn ensure(&mut self, n: usize) {
        while self.stack.len() < n {
            let depth = self.inputs;
            self.inputs += 1;
            let v = self.define(ValueOrigin::StackInput(depth));
            self.stack.insert(0, v);
        }
    }

    fn pop(&mut self) -> ValueId {
        self.ensure(1);
        self.stack.pop().expect("ensured")
    }

    fn mark_used(&mut self, v: ValueId) {
        self.values[v.index].used = true;
    }

    fn constant(&self, v: ValueId) -> Option<U256> {
        self.values[v.index].constant()
    }
}

/// Converts one basic block to single-assignment form.
pub fn to_ssa(block: &BasicBlock) -> SsaBlock {
    let mut b = Builder {
        block: block.id,
        values: Vec::new(),
        stack: Vec::new(),
        inputs: 0,
    };
    let mut jump_target = None;
    let mut jump_condition = None;
    for ins in &block.instructions {
        let op = ins.opcode;
        if op == Opcode::JUMPDEST {
            continue;
        }
        if let Some(value) = ins.push_value() {
            let v = b.define(ValueOrigin::Constant(value));
            b.stack.push(v);
            continue;
        }
        if let Some(n) = op.dup_depth() {
            b.ensure(n);
            let src = b.stack[b.stack.len() - n];
            let origin = match b.constant(src) {
                Some(c) => ValueOrigin::Constant(c),
                None => {
                    b.mark_used(src);
                    ValueOrigin::Computed {
                        opcode: op,
                        operands: vec![src],
                    }
                }
            };
            let v = b.define(origin);
            b.stack.push(v);
            continue;
        }
        if let Some(n) = op.swap_depth() {
            b.ensure(n + 1);
            let top = b.stack.len() - 1;
            b.stack.swap(top, top - n);
            continue;
        }
        if op == Opcode::POP {
            b.pop();
            continue;
        }
        if op == Opcode::JUMP {
            let t = b.pop();
            b.mark_used(t);
            jump_target = Some(t);
            continue;
        }
        if op == Opcode::JUMPI {
            let t = b.pop();
            let c = b.pop();
            b.mark_used(t);
            b.mark_used(c);
            jump_target = Some(t);
            jump_condition = Some(c);
            continue;
        }
        let operands: Vec<ValueId> = (0..op.stack_inputs()).map(|_| b.pop()).collect();
        for v in &operands {
            b.mark_used(*v);
        }
        let outputs = op.stack_outputs();
        if outputs == 0 {
            continue;
        }
        let folded = if FOLDABLE.contains(&op) {
            let consts: Option<Vec<U256>> = operands.iter().map(|v| b.constant(*v)).collect();
            consts.and_then(|c| arith::eval_pure(op, &c))
        } else {
            None
        };
        let origin = match folded {
            Some(c) => ValueOrigin::Constant(c),
            None => ValueOrigin::Computed {
                opcode: op,
                operands: operands.clone(),
            },
        };
        for _ in 0..outputs {
            let v = b.define(origin.clone());
            b.stack.push(v);
        }
    }
    SsaBlock {
        block_id: block.id,
        values: b.values,
        exit_stack: b.stack,
        inputs: b.inputs,
        jump_target,
        jump_condition,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::split_blocks;
    use crate::disasm::disassemble;

    fn ssa_of(code: &[u8]) -> SsaBlock {
        let blocks = split_blocks(&disassemble(code));
        to_ssa(&blocks[0])
    }

    #[test]
    fn single_push() {
        let s = ssa_of(&[0x60, 0x0d]);
        assert_eq!(s.values.len(), 1);
        assert_eq!(s.values[0].origin, ValueOrigin::Constant(U256::from(0x0d)));
        assert!(!s.values[0].used);
        assert_eq!(s.exit_stack, vec![s.values[0].id]);
    }

    #[test]
    fn add_folds() {
        // PUSH1 2, PUSH1 3, ADD
        let s = ssa_of(&[0x60, 0x02, 0x60, 0x03, 0x01]);
        let top = *s.exit_stack.last().unwrap();
        assert_eq!(s.exit_stack.len(), 1);
        assert_eq!(s.value(top).constant(), Some(U256::from(5)));
        assert_eq!(top.index, 2);
    }

    #[test]
    fn swap_jump_on_empty_stack() {
        // SWAP1, JUMP
        let s = ssa_of(&[0x90, 0x56]);
        assert_eq!(s.inputs, 2);
        let target = s.value(s.jump_target.unwrap());
        // after SWAP1 the former second slot is on top
        assert_eq!(target.origin, ValueOrigin::StackInput(1));
        assert!(target.used);
        assert_eq!(s.exit_slot(0), ExitSlot::Value(s.exit_stack[0]));
        assert_eq!(s.value(s.exit_stack[0]).origin, ValueOrigin::StackInput(0));
        assert_eq!(s.exit_slot(1), ExitSlot::EntryDepth(2));
    }

    #[test]
    fn non_foldable_is_computed() {
        // CALLDATALOAD of constant 4
        let s = ssa_of(&[0x60, 0x04, 0x35]);
        let top = s.value(*s.exit_stack.last().unwrap());
        assert!(matches!(
            top.origin,
            ValueOrigin::Computed {
                opcode: Opcode::CALLDATALOAD,
                ..
            }
        ));
        assert!(s.values[0].used);
    }

    #[test]
    fn dup_of_constant_is_constant() {
        let s = ssa_of(&[0x60, 0x07, 0x80]);
        assert_eq!(
            s.exit_constants(),
            vec![Some(U256::from(7)), Some(U256::from(7))]
        );
    }

    #[test]
    fn lt_is_not_folded() {
        let s = ssa_of(&[0x60, 0x01, 0x60, 0x02, 0x10]);
        assert_eq!(s.exit_constants(), vec![None]);
    }
}
