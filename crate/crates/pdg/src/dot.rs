//! Graphviz renderings of the statement graphs.

use std::fmt::Write;

use ceiscan_frontend::{ContractModel, StmtId};

use crate::icfg::{EdgeKind, Icfg};
use crate::ipdg::{DepKind, Ipdg};

fn node_label(model: &ContractModel, s: StmtId) -> String {
    let st = model.stmt(s);
    format!("{} L{}: {}", s, st.span.line, st.label).replace('\\', "\\\\").replace('"', "\\\"")
}

fn clusters(model: &ContractModel, nodes: impl Iterator<Item = StmtId>, out: &mut String) {
    let mut by_fn: std::collections::BTreeMap<_, Vec<StmtId>> = Default::default();
    for n in nodes {
        by_fn.entry(model.stmt(n).function).or_default().push(n);
    }
    for (f, ns) in by_fn {
        let _ = writeln!(out, "  subgraph cluster_{} {{\n    label=\"{}\";", f.0, model.qualified_name(f));
        for n in ns {
            let _ = writeln!(out, "    {} [label=\"{}\"];", n, node_label(model, n));
        }
        let _ = writeln!(out, "  }}");
    }
}

pub fn icfg_dot(model: &ContractModel, icfg: &Icfg) -> String {
    let mut out = String::from("digraph icfg {\n  node [shape=box, fontname=monospace];\n");
    clusters(model, icfg.nodes.iter().copied(), &mut out);
    for (a, b, k) in &icfg.edges {
        let style = match k {
            EdgeKind::Sequential => "",
            EdgeKind::Branch if icfg.is_revert(*a, *b) => ", style=dotted, label=\"revert\"",
            EdgeKind::Branch => ", label=\"branch\"",
            EdgeKind::CallEntry => ", color=blue, label=\"call\"",
            EdgeKind::CallReturn => ", color=blue, style=dashed, label=\"return\"",
        };
        let _ = writeln!(out, "  {a} -> {b} [{}];", style.trim_start_matches(", "));
    }
    out.push_str("}\n");
    out
}

pub fn ipdg_dot(model: &ContractModel, ipdg: &Ipdg) -> String {
    let mut out = String::from("digraph ipdg {\n  node [shape=box, fontname=monospace];\n");
    clusters(model, ipdg.nodes.iter().copied(), &mut out);
    for (a, b, k) in &ipdg.edges {
        let style = match k {
            DepKind::Control => "color=black",
            DepKind::Data => "color=red, style=dashed",
            DepKind::Call => "color=blue, penwidth=2",
        };
        let _ = writeln!(out, "  {a} -> {b} [{style}];");
    }
    out.push_str("}\n");
    out
}
