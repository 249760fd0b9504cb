//! From source spans to bytecode locations.

use std::collections::{BTreeMap, BTreeSet};

use ceiscan_evm::{disassemble, Cfg, Instruction, Opcode};
use ceiscan_frontend::srcmap::{decode, SrcMapEntry};
use ceiscan_frontend::{CallTarget, ContractModel, Span};

/// Bytecode locations of one warning.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Located {
    /// CALL, CALLCODE and DELEGATECALL instructions inside the span.
    pub call_pcs: BTreeSet<usize>,
    /// Start offsets of blocks holding those calls.
    pub blocks: BTreeSet<usize>,
    /// JUMPI instructions inside the span, such as code-size and success
    /// checks.
    pub guard_jumpis: BTreeSet<usize>,
}

/// Instructions paired with their source map entries. The map stops
/// before the metadata trailer, so trailing instructions get none.
pub fn mapped_instructions(code: &[u8], source_map: &str) -> Vec<(Instruction, Option<SrcMapEntry>)> {
    let map = decode(source_map);
    disassemble(code)
        .into_iter()
        .enumerate()
        .map(|(i, ins)| (ins, map.get(i).copied()))
        .collect()
}

fn inside(e: &SrcMapEntry, span: &Span) -> bool {
    e.file == span.file as i64
        && e.start >= span.start as i64
        && e.length >= 0
        && e.start + e.length <= (span.start + span.length) as i64
}

fn may_reenter(op: Opcode) -> bool {
    matches!(op, Opcode::CALL | Opcode::CALLCODE | Opcode::DELEGATECALL)
}

pub fn locate_warning_targets(code: &[u8], source_map: &str, cfg: &Cfg, span: &Span) -> Located {
    let mut out = Located::default();
    for (ins, entry) in mapped_instructions(code, source_map) {
        let Some(e) = entry.filter(|e| inside(e, span)) else { continue };
        if may_reenter(ins.opcode) {
            out.call_pcs.insert(ins.offset);
            if let Some(b) = cfg.block_containing(ins.offset) {
                out.blocks.insert(cfg.block(b).start_offset);
            }
        } else if ins.opcode == Opcode::JUMPI && e.length > 0 {
            out.guard_jumpis.insert(ins.offset);
        }
    }
    out
}

/// For each call instruction whose source is a statically typed external
/// call, the name of the contract implementing the callee.
pub fn known_callees(model: &ContractModel, code: &[u8], source_map: &str) -> BTreeMap<usize, String> {
    let calls: Vec<(&Span, String)> = model
        .statements
        .iter()
        .filter_map(|s| {
            let call = s.call.as_ref()?;
            let CallTarget::External(f) = call.target else { return None };
            let callee = model.function(f);
            Some((&call.span, model.contract(callee.contract).name.clone()))
        })
        .collect();
    let mut out = BTreeMap::new();
    for (ins, entry) in mapped_instructions(code, source_map) {
        if !ins.opcode.is_call() {
            continue;
        }
        let Some(e) = entry else { continue };
        let best = calls
            .iter()
            .filter(|(span, _)| inside(&e, span))
            .min_by_key(|(span, _)| span.length);
        if let Some((_, name)) = best {
            out.insert(ins.offset, name.clone());
        }
    }
    out
}
