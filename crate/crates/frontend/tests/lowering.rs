use std::collections::BTreeMap;
use std::path::PathBuf;

use ceiscan_frontend::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn config() -> CompilerConfig {
    CompilerConfig {
        want_bytecode: true,
        ..Default::default()
    }
}

fn load(name: &str) -> ContractModel {
    compile_and_load(&[fixture(name)], &config()).expect("fixture compiles")
}

fn load_text(text: &str) -> ContractModel {
    let mut s = BTreeMap::new();
    s.insert("t.sol".to_string(), format!("// SPDX-License-Identifier: UNLICENSED\npragma solidity ^0.8.0;\n{text}"));
    compile_sources(&s, &config()).expect("compiles")
}

fn func<'a>(m: &'a ContractModel, contract: &str, name: &str) -> &'a Function {
    m.functions_named(contract, name).into_iter().next().unwrap_or_else(|| panic!("{contract}.{name}"))
}

fn stmts_on_line<'a>(m: &'a ContractModel, f: &Function, line: u32) -> Vec<&'a Statement> {
    m.function_nodes(f.id)
        .into_iter()
        .map(|s| m.stmt(s))
        .filter(|s| s.span.line == line && !matches!(s.kind, StmtKind::Entry | StmtKind::Exit))
        .collect()
}

#[test]
fn fig1_contracts_and_calls() {
    let m = load("fig1_withdraw.sol");
    let names: Vec<&str> = m.contracts.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["ContractA", "ContractB"]);
    let a: Vec<String> = m.contract_by_name("ContractA").unwrap().functions.iter().map(|f| m.qualified_name(*f)).collect();
    assert_eq!(a, ["ContractA.withdraw"]);
    let b: Vec<String> = m.contract_by_name("ContractB").unwrap().functions.iter().map(|f| m.qualified_name(*f)).collect();
    assert_eq!(b, ["ContractB.getBalance", "ContractB.reduceBalance"]);

    let w = func(&m, "ContractA", "withdraw");
    assert_eq!(w.header.line, 3);
    let l4 = stmts_on_line(&m, w, 4);
    assert_eq!(l4.len(), 1);
    let call = l4[0].call.as_ref().unwrap();
    assert_eq!(call.target, CallTarget::External(func(&m, "ContractB", "getBalance").id));
    assert_eq!(call.address.as_deref(), Some("_contractB"));
    assert_eq!(call.address_taint, Taint::UserInput);
    assert!(call.is_static);
    assert!(l4[0].writes.iter().any(|w| w.state_var().is_some()));

    let l5 = stmts_on_line(&m, w, 5);
    assert_eq!(l5[0].kind, StmtKind::ConditionCheck);

    let l6 = stmts_on_line(&m, w, 6)[0].call.clone().unwrap();
    assert_eq!(l6.target, CallTarget::ExternalUnknown);
    assert_eq!(l6.mechanism, CallMechanism::LowLevelCall);
    assert!(l6.value_transfer && l6.unlimited_gas && !l6.is_static);
    assert_eq!(l6.address.as_deref(), Some("msg.sender"));
    assert_eq!(l6.address_taint, Taint::UserInput);

    let l7 = stmts_on_line(&m, w, 7)[0].call.clone().unwrap();
    assert_eq!(l7.target, CallTarget::External(func(&m, "ContractB", "reduceBalance").id));
    assert!(!l7.value_transfer);

    let rb = func(&m, "ContractB", "reduceBalance");
    let l18 = stmts_on_line(&m, rb, 18);
    assert_eq!(l18[0].kind, StmtKind::StateWrite);
    let balances = m.state_vars.iter().find(|v| v.name == "balances").unwrap();
    assert!(balances.is_mapping());
    assert_eq!(balances.slot.as_deref(), Some("0"));
    assert!(m.bytecode.contains_key("ContractA") && m.bytecode.contains_key("ContractB"));
}

#[test]
fn cream_chain_and_modifier() {
    let m = load("cream_borrow.sol");
    let borrow = func(&m, "CreamFinance_Reentrancy", "borrow");
    let internal = func(&m, "CreamFinance_Reentrancy", "borrowInternal");
    let fresh = func(&m, "CreamFinance_Reentrancy", "borrowFresh");
    assert_eq!(internal.modifiers.len(), 1);
    assert_eq!(internal.modifiers[0].name, "nonReentrant");
    assert!(borrow.externally_callable() && !internal.externally_callable());

    let calls = |f: &Function| -> Vec<CallTarget> {
        m.function_nodes(f.id)
            .into_iter()
            .filter_map(|s| m.stmt(s).call.as_ref().map(|c| c.target))
            .collect()
    };
    assert!(calls(borrow).contains(&CallTarget::Internal(internal.id)));
    assert!(calls(internal).contains(&CallTarget::Internal(fresh.id)));
    let reach = m.reachable_functions(borrow.id);
    assert!(reach.contains(&fresh.id));
    assert!(reach.contains(&func(&m, "Comptroller", "borrowVerify").id));

    // the inlined lock reads and writes its flag inside borrowInternal
    let flag = m.state_vars.iter().find(|v| v.name == "_notEntered").unwrap().id;
    let writes_flag = m
        .function_nodes(internal.id)
        .into_iter()
        .filter(|s| m.stmt(*s).writes.contains(&VarRef::whole(VarBase::State(flag))))
        .count();
    assert_eq!(writes_flag, 2);

    let l13 = stmts_on_line(&m, fresh, 13)[0].call.clone().unwrap();
    assert_eq!(l13.target, CallTarget::ExternalUnknown);
    assert_eq!(l13.address_taint, Taint::UserInput);
    let l11 = stmts_on_line(&m, fresh, 11)[0].call.clone().unwrap();
    assert_eq!(l11.address_taint, Taint::StateVariable);
}

#[test]
fn empty_contract() {
    let m = load_text("contract C {}");
    assert_eq!(m.contracts.len(), 1);
    assert!(m.contracts[0].functions.is_empty());
    assert!(m.statements.is_empty());
}

const MIXED: &str = r#"
library SafeMath {
    function add(uint a, uint b) internal pure returns (uint) { return a + b; }
}
interface IToken { function transfer(address to, uint v) external returns (bool); }
abstract contract Base {
    address immutable owner;
    mapping(address => uint) public credit;
    constructor() { owner = msg.sender; }
    function hook(address to) internal virtual;
    modifier onlyOwner() { if (msg.sender != owner) { revert(); } _; }
}
contract Mixed is Base {
    using SafeMath for uint;
    uint total;
    uint[] items;
    function f() public view returns (uint) { return total; }
    function g() public returns (uint) { return this.f(); }
    function pay(uint amount) public onlyOwner {
        payable(owner).transfer(amount);
        payable(msg.sender).send(amount);
        hook(msg.sender);
    }
    function hook(address to) internal override { credit[to] = credit[to].add(1); }
    function split(IToken t, uint v) public {
        require(t.transfer(msg.sender, v));
        total = total.add(v) + items.length;
        items.push(v);
    }
    function zero(address a) public { (bool ok, ) = a.call{value: 0}(""); ok; }
    function asm() public { assembly { sstore(0, 1) } }
}
"#;

#[test]
fn call_classification() {
    let m = load_text(MIXED);
    let find = |name: &str| func(&m, "Mixed", name);
    let call_sites = |f: &Function| -> Vec<CallSite> {
        m.function_nodes(f.id)
            .into_iter()
            .filter_map(|s| m.stmt(s).call.clone())
            .collect()
    };

    let g = call_sites(find("g"));
    assert_eq!(g.len(), 1);
    assert_eq!(g[0].target, CallTarget::Internal(find("f").id));

    let pay = call_sites(find("pay"));
    assert_eq!(pay.len(), 3);
    assert_eq!(pay[0].mechanism, CallMechanism::Transfer);
    assert!(pay[0].value_transfer && !pay[0].unlimited_gas);
    assert_eq!(pay[0].address_taint, Taint::Constant);
    assert_eq!(pay[1].mechanism, CallMechanism::Send);
    assert_eq!(pay[1].address_taint, Taint::UserInput);
    // unimplemented virtual resolves to its unique override
    assert_eq!(pay[2].target, CallTarget::Internal(find("hook").id));
    let owner_check = m
        .function_nodes(find("pay").id)
        .into_iter()
        .map(|s| m.stmt(s))
        .find(|s| s.kind == StmtKind::ConditionCheck)
        .expect("if-revert modifier check");
    assert!(owner_check.label.contains("msg.sender != owner"));

    let hook_calls = call_sites(find("hook"));
    assert!(matches!(hook_calls[0].target, CallTarget::Internal(_)));
    assert_eq!(m.qualified_name(hook_calls[0].resolved().unwrap()), "SafeMath.add");

    // a call inside a check is split out into its own node
    let split = find("split");
    let nodes: Vec<&Statement> = m.function_nodes(split.id).into_iter().map(|s| m.stmt(s)).collect();
    let ext = nodes.iter().find(|s| s.kind == StmtKind::ExternalCall).unwrap();
    let check = nodes.iter().find(|s| s.kind == StmtKind::ConditionCheck).unwrap();
    assert!(ext.id < check.id);
    assert!(check.call.is_none());
    assert!(ext.writes.iter().any(|w| check.reads.contains(w)));
    assert_eq!(ext.call.as_ref().unwrap().target, CallTarget::ExternalUnknown);
    let items_var = m.state_vars.iter().find(|v| v.name == "items").unwrap().id;
    assert!(nodes.iter().any(|s| s.writes.iter().any(|w| w.state_var() == Some(items_var))));

    let zero = call_sites(find("zero"));
    assert!(!zero[0].value_transfer);
    assert_eq!(zero[0].address_taint, Taint::UserInput);

    let asm = m.function_nodes(find("asm").id).into_iter().map(|s| m.stmt(s)).find(|s| s.opaque).unwrap();
    assert_eq!(asm.kind, StmtKind::Other);
    assert_eq!(asm.writes.len(), m.contract_by_name("Mixed").unwrap().state_vars.len());

    // inherited state first, then own; the constructor of Base is not a Mixed function
    let mixed = m.contract_by_name("Mixed").unwrap();
    let vars: Vec<&str> = mixed.state_vars.iter().map(|v| m.state_var(*v).name.as_str()).collect();
    assert_eq!(vars, ["owner", "credit", "total", "items"]);
    assert!(mixed.constructor.is_none());
    assert!(mixed.functions.iter().all(|f| m.function(*f).kind != FunctionKind::Constructor));
}

#[test]
fn model_invariants_and_determinism() {
    for name in ["fig1_withdraw.sol", "cream_borrow.sol"] {
        let a = load(name);
        let b = load(name);
        assert_eq!(a.to_json(), b.to_json(), "{name}");
        let back = ContractModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back.to_json(), a.to_json());

        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let lines = text.lines().count() as u32;
        for s in &a.statements {
            assert!(a.file(s.span.file).is_some());
            assert!(s.span.line >= 1 && s.span.end_line <= lines, "{name} {:?}", s.span);
            assert!((s.span.end() as usize) <= text.len());
        }
        for t in a.call_graph().values() {
            if let CallTarget::Internal(f) | CallTarget::External(f) = t {
                assert!(f.index() < a.functions.len());
                assert!(a.function(*f).body.is_some());
            }
        }
    }
}

#[test]
fn legacy_ast_is_rejected() {
    let out = serde_json::json!({
        "sources": { "a.sol": { "id": 0, "legacyAST": {}, "ast": { "name": "SourceUnit", "children": [] } } }
    });
    let mut s = BTreeMap::new();
    s.insert("a.sol".to_string(), String::new());
    match build_model(&out, &s, "0.4.24") {
        Err(FrontendError::UnsupportedAst(msg)) => assert!(msg.contains("legacy")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn compile_errors_are_reported() {
    let mut s = BTreeMap::new();
    s.insert("bad.sol".to_string(), "contract { }".to_string());
    assert!(matches!(compile_sources(&s, &config()), Err(FrontendError::CompileErrors(_))));
}
