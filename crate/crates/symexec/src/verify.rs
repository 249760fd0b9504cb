//! Checking Stage I warnings against the compiled contracts.

use std::collections::BTreeMap;

use ceiscan_evm::{decode_hex, U256};
use ceiscan_frontend::{ContractModel, FunctionId};
use ceiscan_pdg::Warning;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{account, execute, Budget, Entry, Param, Program, Status, Target, Verdict};
use crate::locate::{known_callees, locate_warning_targets};
use crate::ppt::single_contract;
use crate::smt::{Backend, SolverConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageTwoConfig {
    pub budget: Budget,
    pub solver: SolverConfig,
}

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("bytecode of {0} is not valid hex")]
    BadHex(String),
}

const BASE_ADDRESS: u64 = 0xC0DE_0000;

/// Every compiled contract as an account at a fixed address, plus the
/// statically known callee of each external call site.
pub struct Deployment {
    pub program: Program,
    pub source_maps: Vec<String>,
    pub callees: BTreeMap<(usize, usize), usize>,
}

impl Deployment {
    pub fn new(model: &ContractModel) -> Result<Self, DeployError> {
        let mut accounts = Vec::new();
        let mut source_maps = Vec::new();
        for (name, bc) in &model.bytecode {
            let code = decode_hex(&bc.deployed).map_err(|_| DeployError::BadHex(name.clone()))?;
            if code.is_empty() {
                continue;
            }
            let address = U256::from(BASE_ADDRESS + accounts.len() as u64);
            accounts.push(account(name, address, code));
            source_maps.push(bc.source_map.clone());
        }
        let mut callees = BTreeMap::new();
        for (i, a) in accounts.iter().enumerate() {
            for (pc, name) in known_callees(model, &a.code.bytes, &source_maps[i]) {
                if let Some(j) = accounts.iter().position(|b| b.name == name) {
                    callees.insert((i, pc), j);
                }
            }
        }
        Ok(Deployment {
            program: Program { accounts },
            source_maps,
            callees,
        })
    }

    pub fn account_named(&self, name: &str) -> Option<usize> {
        self.program.accounts.iter().position(|a| a.name == name)
    }

    /// Account whose code exposes `f`, preferring the declaring contract.
    pub fn host_of(&self, model: &ContractModel, f: FunctionId) -> Option<usize> {
        let own = &model.contract(model.function(f).contract).name;
        self.account_named(own).or_else(|| {
            model
                .contracts
                .iter()
                .filter(|c| c.functions.contains(&f))
                .find_map(|c| self.account_named(&c.name))
        })
    }
}

/// ABI head shape of a parameter type; `None` when not modelled.
pub fn param_shape(type_string: &str) -> Option<Param> {
    let t = type_string
        .trim()
        .trim_end_matches(" memory")
        .trim_end_matches(" calldata")
        .trim_end_matches(" storage");
    if t == "string" || t == "bytes" || t.ends_with("[]") {
        return Some(Param::Dynamic);
    }
    if t.contains('[') || t.starts_with("struct ") || t.starts_with("function ") {
        return None;
    }
    let base = t.split_whitespace().next().unwrap_or("");
    match base {
        "contract" | "address" | "interface" => Some(Param::Word(160)),
        "bool" => Some(Param::Word(1)),
        "enum" => Some(Param::Word(8)),
        _ => match base.strip_prefix("uint") {
            Some("") => Some(Param::Word(256)),
            Some(n) => n.parse::<u16>().ok().filter(|b| *b % 8 == 0 && (8..=256).contains(b)).map(Param::Word),
            None => (base.starts_with("int") || base.starts_with("bytes")).then_some(Param::Word(256)),
        },
    }
}

fn entry_for(model: &ContractModel, f: FunctionId, account: usize) -> Option<Entry> {
    let func = model.function(f);
    let params = func.param_types.iter().map(|p| param_shape(p)).collect::<Option<Vec<_>>>()?;
    let selector = match &func.selector {
        Some(s) => decode_hex(s).ok()?,
        None => Vec::new(),
    };
    Some(Entry {
        account,
        selector,
        params,
    })
}

fn rank(s: Status) -> u8 {
    match s {
        Status::Confirmed => 3,
        Status::UnknownBudget => 2,
        Status::UnknownTimeout => 1,
        Status::Unreachable => 0,
    }
}

/// Runs Stage II for each entry point of the warning and keeps the
/// strongest verdict: confirmed, then unknown, then unreachable.
pub fn verify_warning(
    model: &ContractModel,
    deployment: &Deployment,
    warning: &Warning,
    config: &StageTwoConfig,
    backend: &mut dyn Backend,
) -> Verdict {
    let resolve = |code: usize, pc: usize| deployment.callees.get(&(code, pc)).copied();
    let reentry = single_contract(model, warning);
    let mut best: Option<Verdict> = None;
    for &e in &warning.entry_points {
        let verdict = match deployment.host_of(model, e) {
            None => Verdict::without_paths(Status::UnknownBudget),
            Some(host) => match entry_for(model, e, host) {
                None => Verdict::without_paths(Status::UnknownBudget),
                Some(entry) => {
                    let a = &deployment.program.accounts[host];
                    let located =
                        locate_warning_targets(&a.code.bytes, &deployment.source_maps[host], &a.code.cfg, &warning.span);
                    let target = Target {
                        pcs: located.call_pcs,
                        guard_slots: guard_slots(model, deployment, warning, host),
                        reentry,
                    };
                    execute(&deployment.program, &entry, &target, &config.budget, backend, &resolve)
                }
            },
        };
        if verdict.status == Status::Confirmed {
            return verdict;
        }
        if best.as_ref().is_none_or(|b| rank(verdict.status) > rank(b.status)) {
            best = Some(verdict);
        }
    }
    best.unwrap_or_else(|| Verdict::without_paths(Status::UnknownBudget))
}

fn guard_slots(model: &ContractModel, deployment: &Deployment, warning: &Warning, host: usize) -> Vec<(usize, U256)> {
    let host_name = &deployment.program.accounts[host].name;
    let host_contract = model.contract_by_name(host_name);
    warning
        .violated
        .iter()
        .filter_map(|v| {
            let var = model.state_var(*v);
            let slot = var.slot.as_deref()?.parse::<U256>().ok()?;
            let acct = if host_contract.is_some_and(|c| c.state_vars.contains(v)) {
                host
            } else {
                deployment.account_named(&model.contract(var.contract).name)?
            };
            Some((acct, slot))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_shapes() {
        assert_eq!(param_shape("contract ContractB"), Some(Param::Word(160)));
        assert_eq!(param_shape("address payable"), Some(Param::Word(160)));
        assert_eq!(param_shape("uint8"), Some(Param::Word(8)));
        assert_eq!(param_shape("uint256"), Some(Param::Word(256)));
        assert_eq!(param_shape("bool"), Some(Param::Word(1)));
        assert_eq!(param_shape("bytes32"), Some(Param::Word(256)));
        assert_eq!(param_shape("string memory"), Some(Param::Dynamic));
        assert_eq!(param_shape("uint256[] calldata"), Some(Param::Dynamic));
        assert_eq!(param_shape("uint256[3] memory"), None);
        assert_eq!(param_shape("struct S memory"), None);
    }
}
