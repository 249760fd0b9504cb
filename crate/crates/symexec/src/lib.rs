//! Stage II: bytecode-level symbolic execution of Stage I warnings.

pub mod engine;
pub mod locate;
pub mod memory;
pub mod ppt;
pub mod smt;
pub mod state;
pub mod term;
pub mod verify;

pub use engine::{
    attacker_controlled, call_context_switch, execute, Budget, CallArgs, Callee, Entry, Param, Program, Stats, Status,
    Target, Verdict, Witness, WitnessAccount, WitnessStub, WitnessTx,
};
pub use locate::{locate_warning_targets, Located};
pub use ppt::{ppt_filter, DropReason, PptDecision};
pub use smt::{solve, Backend, Conjunct, SatResult, SolverConfig, SolverError, Z3};
pub use state::{Account, Code, PathConstraint, PathStep, Register, SymbolicState};
pub use verify::{verify_warning, Deployment, StageTwoConfig};
