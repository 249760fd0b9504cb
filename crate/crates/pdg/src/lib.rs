//! Stage I: inter-contract control flow and dependence graphs, backward
//! slicing, and the Check-Effect-Interaction check.

pub mod dot;
pub mod icfg;
pub mod ipdg;
pub mod slicer;

pub use icfg::{build_icfg, function_cfg, EdgeKind, FunctionCfg, Icfg};
pub use ipdg::{build_ipdg, control_dependences, data_dependences, post_dominators, DepKind, Ipdg};
pub use slicer::{
    backward_slice, check_cei, find_criteria, run_stage_one, Confidence, Effects, Rule, Slice, SliceCriterion,
    SlicerConfig, StageOne, Warning,
};
