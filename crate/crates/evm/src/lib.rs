//! EVM bytecode: disassembly, basic blocks, and control-flow recovery.

pub mod arith;
pub mod cfg;
pub mod disasm;
pub mod opcode;
pub mod recover;
pub mod ssa;

pub use cfg::{build_partial_cfg, BasicBlock, BlockId, Cfg, Edge, EdgeKind, EdgeOrigin, TerminatorKind};
pub use disasm::{decode_hex, disassemble, Instruction};
pub use opcode::Opcode;
pub use recover::{build_cfg, find_unused_var, recover_cfg};
pub use ruint::aliases::U256;
