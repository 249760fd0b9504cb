#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ceiscan_frontend::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load(name: &str) -> ContractModel {
    compile_and_load(&[fixture(name)], &CompilerConfig::default()).expect("fixture compiles")
}

/// Compiles `text` after a two-line header, so user line N is reported as N + 2.
pub fn load_text(text: &str) -> ContractModel {
    let mut s = BTreeMap::new();
    s.insert("t.sol".to_string(), format!("// SPDX-License-Identifier: UNLICENSED\npragma solidity ^0.8.0;\n{text}"));
    compile_sources(&s, &CompilerConfig::default()).expect("compiles")
}

pub fn func<'a>(m: &'a ContractModel, contract: &str, name: &str) -> &'a Function {
    m.functions_named(contract, name).into_iter().next().unwrap_or_else(|| panic!("{contract}.{name}"))
}

/// Body statements of `f` on a source line.
pub fn on_line(m: &ContractModel, f: &Function, line: u32) -> Vec<StmtId> {
    m.function_nodes(f.id)
        .into_iter()
        .filter(|s| {
            let st = m.stmt(*s);
            st.span.line == line && !matches!(st.kind, StmtKind::Entry | StmtKind::Exit)
        })
        .collect()
}

pub fn one_on_line(m: &ContractModel, f: &Function, line: u32) -> StmtId {
    let v = on_line(m, f, line);
    assert_eq!(v.len(), 1, "statements on line {line}: {v:?}");
    v[0]
}

pub fn lines(m: &ContractModel, nodes: &BTreeSet<StmtId>) -> BTreeSet<u32> {
    nodes.iter().map(|s| m.stmt(*s).span.line).collect()
}

pub const SHAPES: &str = r#"
contract Shapes {
    mapping(address => uint) bal;
    uint total;
    bool locked;

    function loops(uint n) public returns (uint acc) {
        for (uint i = 0; i < n; i++) {
            if (i == 3) { continue; }
            if (acc > 100) { break; }
            acc += i;
        }
        uint j = n;
        while (j > 0) { j--; total += j; }
        do { acc++; } while (acc < 5);
        return acc;
    }

    function guard(address a, uint v) public {
        require(!locked);
        locked = true;
        if (bal[a] < v) { revert("low"); }
        bal[a] -= v;
        helper(a);
        locked = false;
    }

    function helper(address a) internal {
        total = bal[a];
        if (total == 0) { return; }
        total = total + 1;
    }
}
"#;
