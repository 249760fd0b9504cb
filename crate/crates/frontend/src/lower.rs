//! Lowering of the compiler's compact JSON AST into the statement model.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::model::*;
use crate::taint::{self, Source, TaintFacts};
use crate::FrontendError;

const LOW_LEVEL: [&str; 5] = ["call", "send", "transfer", "delegatecall", "staticcall"];

fn node_type(v: &Value) -> &str {
    v["nodeType"].as_str().unwrap_or("")
}

fn id_of(v: &Value) -> i64 {
    v["id"].as_i64().unwrap_or(-1)
}

fn ref_of(v: &Value) -> Option<i64> {
    v["referencedDeclaration"].as_i64()
}

fn type_string(v: &Value) -> &str {
    v["typeDescriptions"]["typeString"].as_str().unwrap_or("")
}

fn items(v: &Value) -> impl Iterator<Item = &Value> {
    v.as_array().into_iter().flatten()
}

fn parse_src(src: &str) -> (u32, u32, i64) {
    let mut it = src.split(':');
    let start = it.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let len = it.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let file = it.next().and_then(|s| s.parse().ok()).unwrap_or(-1);
    (start, len, file)
}

/// Index of every AST node carrying an id.
struct AstIndex<'a> {
    nodes: HashMap<i64, &'a Value>,
}

impl<'a> AstIndex<'a> {
    fn build(roots: &[&'a Value]) -> Self {
        let mut nodes = HashMap::new();
        let mut work: Vec<&'a Value> = roots.to_vec();
        while let Some(v) = work.pop() {
            match v {
                Value::Object(map) => {
                    if map.contains_key("nodeType") {
                        if let Some(id) = map.get("id").and_then(Value::as_i64) {
                            nodes.insert(id, v);
                        }
                    }
                    work.extend(map.values());
                }
                Value::Array(a) => work.extend(a.iter()),
                _ => {}
            }
        }
        AstIndex { nodes }
    }

    fn get(&self, id: i64) -> Option<&'a Value> {
        self.nodes.get(&id).copied()
    }
}

/// A call found while evaluating one statement, before node assignment.
struct PendingCall {
    site: CallSite,
    addr_sources: BTreeSet<Source>,
    reads: BTreeSet<VarRef>,
    temp: u32,
    src: String,
}

#[derive(Default)]
struct Cx {
    scopes: Vec<BTreeSet<VarRef>>,
    writes: BTreeSet<VarRef>,
    calls: Vec<PendingCall>,
}

impl Cx {
    fn new() -> Self {
        Cx {
            scopes: vec![BTreeSet::new()],
            ..Default::default()
        }
    }

    fn read(&mut self, r: VarRef) {
        self.scopes.last_mut().expect("scope").insert(r);
    }
}

enum Classified<'a> {
    Conversion,
    Builtin(Option<&'a Value>),
    ArrayMutation(&'a Value),
    Call(CallShape<'a>),
}

struct CallShape<'a> {
    target: CallTarget,
    mechanism: CallMechanism,
    name: String,
    value: Option<&'a Value>,
    options: Vec<&'a Value>,
    /// Address expression for external calls.
    address: Option<&'a Value>,
    /// Receiver evaluated for its reads (bound library argument, address).
    receiver: Option<&'a Value>,
    is_static: bool,
}

struct FnMeta {
    ast_id: i64,
    contract: ContractId,
    implemented: bool,
    is_library: bool,
    externally_callable: bool,
    view: bool,
    base_functions: Vec<i64>,
}

pub(crate) struct Lowering<'a> {
    ast: AstIndex<'a>,
    texts: BTreeMap<u32, String>,
    files: Vec<SourceFile>,
    contracts: Vec<Contract>,
    contract_of: HashMap<i64, ContractId>,
    state_vars: Vec<StateVar>,
    state_of: HashMap<i64, StateVarId>,
    functions: Vec<Option<Function>>,
    func_of: HashMap<i64, FunctionId>,
    meta: Vec<FnMeta>,
    statements: Vec<Statement>,
    next_temp: u32,
    facts: TaintFacts,
    /// Address sources per call-site statement.
    call_sources: BTreeMap<StmtId, BTreeSet<Source>>,
    cur_fn: FunctionId,
    cur_contract_vars: Vec<StateVarId>,
    /// (modifier invocations, index of the next expansion) per active modifier.
    placeholder: Vec<usize>,
    mods: Vec<(&'a Value, &'a Value)>,
    body: Option<&'a Value>,
}

/// Builds a model from standard-JSON compiler output.
pub fn build_model(
    output: &Value,
    sources: &BTreeMap<String, String>,
    compiler: &str,
) -> Result<ContractModel, FrontendError> {
    let mut units: Vec<(u32, &String, &Value)> = Vec::new();
    let srcs = output["sources"]
        .as_object()
        .ok_or_else(|| FrontendError::UnsupportedAst("compiler output has no sources".into()))?;
    for (name, unit) in srcs {
        let ast = &unit["ast"];
        if node_type(ast) != "SourceUnit" {
            let what = if ast.get("children").is_some() || unit.get("legacyAST").is_some() {
                "legacy children-format AST"
            } else {
                "missing compact AST"
            };
            return Err(FrontendError::UnsupportedAst(format!("{name}: {what}")));
        }
        let index = unit["id"].as_u64().unwrap_or(units.len() as u64) as u32;
        units.push((index, name, ast));
    }
    units.sort_by_key(|u| u.0);

    let roots: Vec<&Value> = units.iter().map(|u| u.2).collect();
    let mut lw = Lowering {
        ast: AstIndex::build(&roots),
        texts: BTreeMap::new(),
        files: Vec::new(),
        contracts: Vec::new(),
        contract_of: HashMap::new(),
        state_vars: Vec::new(),
        state_of: HashMap::new(),
        functions: Vec::new(),
        func_of: HashMap::new(),
        meta: Vec::new(),
        statements: Vec::new(),
        next_temp: 0,
        facts: TaintFacts::default(),
        call_sources: BTreeMap::new(),
        cur_fn: FunctionId(0),
        cur_contract_vars: Vec::new(),
        placeholder: Vec::new(),
        mods: Vec::new(),
        body: None,
    };
    for (index, name, _) in &units {
        let text = sources
            .get(*name)
            .ok_or_else(|| FrontendError::MissingSource((*name).clone()))?;
        lw.files.push(SourceFile {
            path: (*name).clone(),
            index: *index,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
            line_starts: line_starts(text),
        });
        lw.texts.insert(*index, text.clone());
    }

    let contract_nodes: Vec<&Value> = roots
        .iter()
        .flat_map(|r| items(&r["nodes"]))
        .filter(|n| node_type(n) == "ContractDefinition")
        .collect();
    lw.declare(&contract_nodes, output);
    for c in &contract_nodes {
        for f in items(&c["nodes"]).filter(|n| node_type(n) == "FunctionDefinition") {
            lw.lower_function(f);
        }
    }
    lw.resolve_taint();

    let mut bytecode = BTreeMap::new();
    for (file, per) in output["contracts"].as_object().into_iter().flatten() {
        for (name, c) in per.as_object().into_iter().flatten() {
            let code = c["evm"]["deployedBytecode"]["object"].as_str().unwrap_or("");
            if code.is_empty() {
                continue;
            }
            let key = if bytecode.contains_key(name) {
                format!("{file}:{name}")
            } else {
                name.clone()
            };
            bytecode.insert(
                key,
                Bytecode {
                    deployed: zero_link_placeholders(code),
                    source_map: c["evm"]["deployedBytecode"]["sourceMap"]
                        .as_str()
                        .unwrap_or("")
                        .to_string(),
                },
            );
        }
    }

    Ok(ContractModel {
        version: MODEL_VERSION,
        compiler: compiler.to_string(),
        files: lw.files,
        contracts: lw.contracts,
        state_vars: lw.state_vars,
        functions: lw.functions.into_iter().map(|f| f.expect("every function lowered")).collect(),
        statements: lw.statements,
        bytecode,
    })
}

fn zero_link_placeholders(code: &str) -> String {
    let re = regex::Regex::new(r"__\$[0-9a-fA-F]{34}\$__").expect("valid regex");
    re.replace_all(code, "0".repeat(40).as_str()).into_owned()
}

impl<'a> Lowering<'a> {
    fn span(&self, src: &str) -> Span {
        let (start, length, file) = parse_src(src);
        let file = if file < 0 { self.files.first().map_or(0, |f| f.index) } else { file as u32 };
        match self.files.iter().find(|f| f.index == file) {
            Some(sf) => Span {
                file,
                start,
                length,
                line: sf.line_of(start),
                end_line: sf.line_of((start + length).saturating_sub(1).max(start)),
            },
            None => Span {
                file,
                start,
                length,
                line: 0,
                end_line: 0,
            },
        }
    }

    fn text(&self, src: &str) -> String {
        let (start, len, file) = parse_src(src);
        self.texts
            .get(&(file.max(0) as u32))
            .and_then(|t| t.get(start as usize..(start + len) as usize))
            .unwrap_or("")
            .to_string()
    }

    fn label(&self, src: &str) -> String {
        let flat = self.text(src).split_whitespace().collect::<Vec<_>>().join(" ");
        if flat.chars().count() > 80 {
            let cut: String = flat.chars().take(77).collect();
            format!("{cut}...")
        } else {
            flat
        }
    }

    /// Assigns ids to contracts, state variables and functions, and
    /// flattens inheritance.
    fn declare(&mut self, contracts: &[&'a Value], output: &Value) {
        let mut slots: HashMap<i64, String> = HashMap::new();
        for per in output["contracts"].as_object().into_iter().flat_map(|m| m.values()) {
            for c in per.as_object().into_iter().flat_map(|m| m.values()) {
                for e in items(&c["storageLayout"]["storage"]) {
                    if let (Some(id), Some(slot)) = (e["astId"].as_i64(), e["slot"].as_str()) {
                        slots.insert(id, slot.to_string());
                    }
                }
            }
        }

        for (i, c) in contracts.iter().enumerate() {
            self.contract_of.insert(id_of(c), ContractId(i as u32));
        }
        for (i, c) in contracts.iter().enumerate() {
            let cid = ContractId(i as u32);
            let kind = match c["contractKind"].as_str() {
                Some("interface") => ContractKind::Interface,
                Some("library") => ContractKind::Library,
                _ => ContractKind::Contract,
            };
            let span = self.span(c["src"].as_str().unwrap_or(""));
            self.contracts.push(Contract {
                id: cid,
                name: c["name"].as_str().unwrap_or("").to_string(),
                kind,
                is_abstract: c["abstract"].as_bool().unwrap_or(false)
                    || c["fullyImplemented"].as_bool() == Some(false),
                file: span.file,
                span,
                bases: Vec::new(),
                state_vars: Vec::new(),
                functions: Vec::new(),
                constructor: None,
                ast_id: id_of(c),
            });
            for n in items(&c["nodes"]) {
                match node_type(n) {
                    "VariableDeclaration" => {
                        let vid = StateVarId(self.state_vars.len() as u32);
                        let mutability = n["mutability"].as_str().unwrap_or("");
                        self.state_of.insert(id_of(n), vid);
                        self.state_vars.push(StateVar {
                            id: vid,
                            contract: cid,
                            name: n["name"].as_str().unwrap_or("").to_string(),
                            type_string: type_string(n).to_string(),
                            constant: n["constant"].as_bool().unwrap_or(false) || mutability == "constant",
                            immutable: mutability == "immutable",
                            slot: slots.get(&id_of(n)).cloned(),
                            span: self.span(n["src"].as_str().unwrap_or("")),
                            ast_id: id_of(n),
                        });
                    }
                    "FunctionDefinition" => {
                        let fid = FunctionId(self.meta.len() as u32);
                        self.func_of.insert(id_of(n), fid);
                        let visibility = n["visibility"].as_str().unwrap_or("public");
                        let kind = function_kind(n, c);
                        self.meta.push(FnMeta {
                            ast_id: id_of(n),
                            contract: cid,
                            implemented: n["body"].is_object(),
                            is_library: kind_is_library(c),
                            externally_callable: match kind {
                                FunctionKind::Constructor => false,
                                FunctionKind::Fallback | FunctionKind::Receive => true,
                                FunctionKind::Function => visibility == "public" || visibility == "external",
                            },
                            view: is_view_node(n),
                            base_functions: items(&n["baseFunctions"]).filter_map(Value::as_i64).collect(),
                        });
                        self.functions.push(None);
                    }
                    _ => {}
                }
            }
        }

        for (i, c) in contracts.iter().enumerate() {
            let linear: Vec<ContractId> = items(&c["linearizedBaseContracts"])
                .filter_map(Value::as_i64)
                .filter_map(|id| self.contract_of.get(&id).copied())
                .collect();
            let me = ContractId(i as u32);
            let bases: Vec<ContractId> = linear.iter().copied().filter(|b| *b != me).collect();
            let mut vars = Vec::new();
            for b in linear.iter().rev() {
                let node = contracts[b.index()];
                for n in items(&node["nodes"]) {
                    if let Some(v) = self.state_of.get(&id_of(n)) {
                        vars.push(*v);
                    }
                }
            }
            let mut seen = BTreeSet::new();
            let mut funcs = Vec::new();
            let mut constructor = None;
            let order = if linear.is_empty() { vec![me] } else { linear.clone() };
            for b in order {
                let node = contracts[b.index()];
                for n in items(&node["nodes"]).filter(|n| node_type(n) == "FunctionDefinition") {
                    let fid = self.func_of[&id_of(n)];
                    let kind = function_kind(n, node);
                    if kind == FunctionKind::Constructor {
                        if b == me {
                            constructor = Some(fid);
                            funcs.push(fid);
                        }
                        continue;
                    }
                    let params: Vec<String> = items(&n["parameters"]["parameters"])
                        .map(|p| type_string(p).to_string())
                        .collect();
                    let key = (format!("{kind:?}"), n["name"].as_str().unwrap_or("").to_string(), params);
                    if seen.insert(key) {
                        funcs.push(fid);
                    }
                }
            }
            let con = &mut self.contracts[i];
            con.bases = bases;
            con.state_vars = vars;
            con.functions = funcs;
            con.constructor = constructor;
        }
    }

    fn new_stmt(&mut self, kind: StmtKind, src: &str, reads: BTreeSet<VarRef>, writes: BTreeSet<VarRef>) -> StmtId {
        let id = StmtId(self.statements.len() as u32);
        self.statements.push(Statement {
            id,
            function: self.cur_fn,
            kind,
            reads,
            writes,
            call: None,
            span: self.span(src),
            label: self.label(src),
            opaque: false,
        });
        id
    }

    fn lower_function(&mut self, f: &'a Value) {
        let fid = self.func_of[&id_of(f)];
        let meta_contract = self.meta[fid.index()].contract;
        self.cur_fn = fid;
        self.cur_contract_vars = self.contracts[meta_contract.index()].state_vars.clone();
        let contract_node = self.ast.get(self.contracts[meta_contract.index()].ast_id).expect("contract node");
        let kind = function_kind(f, contract_node);
        let src = f["src"].as_str().unwrap_or("");
        let (start, len, file) = parse_src(src);
        let header_src = match f["body"]["src"].as_str() {
            Some(b) => {
                let (bstart, _, _) = parse_src(b);
                format!("{start}:{}:{file}", bstart.saturating_sub(start))
            }
            None => format!("{start}:{len}:{file}"),
        };

        let params: Vec<&Value> = items(&f["parameters"]["parameters"]).collect();
        let returns: Vec<&Value> = items(&f["returnParameters"]["parameters"]).collect();
        let callable = self.meta[fid.index()].externally_callable;
        for p in &params {
            if callable {
                self.facts.assign(id_of(p), [Source::Fixed(Taint::UserInput)]);
            }
        }
        let named_returns: Vec<i64> = returns
            .iter()
            .filter(|r| r["name"].as_str().is_some_and(|n| !n.is_empty()))
            .map(|r| id_of(r))
            .collect();

        let entry_writes = params
            .iter()
            .map(|p| id_of(p))
            .chain(named_returns.iter().copied())
            .map(|d| VarRef::whole(VarBase::Local(d)))
            .collect();
        let entry = self.new_stmt(StmtKind::Entry, &header_src, BTreeSet::new(), entry_writes);

        let modifiers: Vec<ModifierUse> = items(&f["modifiers"])
            .filter(|m| m["kind"].as_str() != Some("baseConstructorSpecifier"))
            .map(|m| ModifierUse {
                name: m["modifierName"]["name"].as_str().unwrap_or("").to_string(),
                span: self.span(m["src"].as_str().unwrap_or("")),
                ast_id: ref_of(&m["modifierName"]).unwrap_or(-1),
            })
            .collect();

        let body = if f["body"].is_object() {
            self.mods = items(&f["modifiers"])
                .filter_map(|m| {
                    let def = self.ast.get(ref_of(&m["modifierName"])?)?;
                    (node_type(def) == "ModifierDefinition").then_some((def, m))
                })
                .collect();
            self.body = Some(&f["body"]);
            self.placeholder.clear();
            Some(Stmt::Scope(Box::new(self.expand(0))))
        } else {
            None
        };

        let mut exit_reads: BTreeSet<VarRef> = named_returns.iter().map(|d| VarRef::whole(VarBase::Local(*d))).collect();
        exit_reads.insert(VarRef::whole(VarBase::Ret(fid)));
        let exit = self.new_stmt(StmtKind::Exit, &header_src, exit_reads, BTreeSet::new());
        self.statements[entry.index()].label = format!("entry {}", f["name"].as_str().filter(|n| !n.is_empty()).unwrap_or(kind_name(kind)));
        self.statements[exit.index()].label = format!("exit {}", f["name"].as_str().filter(|n| !n.is_empty()).unwrap_or(kind_name(kind)));

        let visibility = match f["visibility"].as_str() {
            Some("external") => Visibility::External,
            Some("internal") => Visibility::Internal,
            Some("private") => Visibility::Private,
            _ => Visibility::Public,
        };
        self.functions[fid.index()] = Some(Function {
            id: fid,
            contract: meta_contract,
            name: f["name"].as_str().unwrap_or("").to_string(),
            kind,
            visibility,
            mutability: mutability_of(f),
            params: params.iter().map(|p| p["name"].as_str().unwrap_or("").to_string()).collect(),
            param_types: params
                .iter()
                .map(|p| p["typeDescriptions"]["typeString"].as_str().unwrap_or("").to_string())
                .collect(),
            param_decls: params.iter().map(|p| id_of(p)).collect(),
            modifiers,
            selector: f["functionSelector"].as_str().map(str::to_string),
            span: self.span(src),
            header: self.span(&header_src),
            entry,
            exit,
            body,
            ast_id: id_of(f),
        });
    }

    /// Expands modifier `i` around the rest; past the last modifier, the
    /// function body itself.
    fn expand(&mut self, i: usize) -> Stmt {
        if i >= self.mods.len() {
            let body = self.body.expect("body set");
            return self.stmt(body);
        }
        let (def, inv) = self.mods[i];
        let mut out = Vec::new();
        let params: Vec<&Value> = items(&def["parameters"]["parameters"]).collect();
        let args: Vec<&Value> = items(&inv["arguments"]).collect();
        if !params.is_empty() {
            let mut cx = Cx::new();
            for (p, a) in params.iter().zip(&args) {
                self.expr(a, &mut cx);
                let s = self.sources(a);
                self.facts.assign(id_of(p), s);
                cx.writes.insert(VarRef::whole(VarBase::Local(id_of(p))));
            }
            out.extend(self.emit(cx, None, inv["src"].as_str().unwrap_or(""), None));
        }
        self.placeholder.push(i + 1);
        out.push(self.stmt(&def["body"]));
        self.placeholder.pop();
        Stmt::Block(out)
    }

    fn stmt(&mut self, s: &'a Value) -> Stmt {
        let src = s["src"].as_str().unwrap_or("");
        match node_type(s) {
            "Block" | "UncheckedBlock" => Stmt::Block(items(&s["statements"]).map(|x| self.stmt(x)).collect()),
            "PlaceholderStatement" => {
                let next = self.placeholder.last().copied().unwrap_or(self.mods.len());
                let saved = self.placeholder.clone();
                let inner = self.expand(next);
                self.placeholder = saved;
                Stmt::Scope(Box::new(inner))
            }
            "ExpressionStatement" => {
                let e = &s["expression"];
                if is_builtin_call(e, &["require", "assert"]) {
                    let mut cx = Cx::new();
                    for a in items(&e["arguments"]) {
                        self.expr(a, &mut cx);
                    }
                    self.wrap(cx, StmtKind::ConditionCheck, src, None, Stmt::Require)
                } else if is_builtin_call(e, &["revert"]) {
                    self.revert_node(s)
                } else {
                    let mut cx = Cx::new();
                    self.expr(e, &mut cx);
                    let top = top_call(e);
                    self.wrap(cx, StmtKind::Other, src, top, Stmt::Node)
                }
            }
            "RevertStatement" | "Throw" => self.revert_node(s),
            "VariableDeclarationStatement" => {
                let mut cx = Cx::new();
                let init = &s["initialValue"];
                let init_sources = if init.is_object() {
                    self.expr(init, &mut cx);
                    self.sources(init)
                } else {
                    BTreeSet::new()
                };
                for d in items(&s["declarations"]).filter(|d| d.is_object()) {
                    self.facts.assign(id_of(d), init_sources.iter().copied());
                    cx.writes.insert(VarRef::whole(VarBase::Local(id_of(d))));
                }
                let top = if init.is_object() { top_call(init) } else { None };
                self.wrap(cx, StmtKind::Assignment, src, top, Stmt::Node)
            }
            "Return" => {
                let mut cx = Cx::new();
                let e = &s["expression"];
                let mut top = None;
                if e.is_object() {
                    self.expr(e, &mut cx);
                    cx.writes.insert(VarRef::whole(VarBase::Ret(self.cur_fn)));
                    top = top_call(e);
                }
                self.wrap(cx, StmtKind::Return, src, top, Stmt::Return)
            }
            "IfStatement" => {
                let mut cx = Cx::new();
                self.expr(&s["condition"], &mut cx);
                let kind = if reverts(&s["trueBody"]) {
                    StmtKind::ConditionCheck
                } else {
                    StmtKind::Other
                };
                let cond_src = s["condition"]["src"].as_str().unwrap_or(src);
                let (aux, head) = self.emit_split(cx, Some(kind), cond_src, None);
                let then = Box::new(self.stmt(&s["trueBody"]));
                let els = s["falseBody"].is_object().then(|| Box::new(self.stmt(&s["falseBody"])));
                prefix(aux, Stmt::If { head, then, els })
            }
            "WhileStatement" | "DoWhileStatement" | "ForStatement" => {
                let mut pre = Vec::new();
                if s["initializationExpression"].is_object() {
                    pre.push(self.stmt(&s["initializationExpression"]));
                }
                let mut cx = Cx::new();
                let cond = &s["condition"];
                if cond.is_object() {
                    self.expr(cond, &mut cx);
                }
                let cond_src = cond["src"].as_str().unwrap_or(src);
                let (aux, head) = self.emit_split(cx, Some(StmtKind::LoopHeader), cond_src, None);
                pre.extend(aux.into_iter().map(Stmt::Node));
                let body = Box::new(self.stmt(&s["body"]));
                let update = s["loopExpression"].is_object().then(|| Box::new(self.stmt(&s["loopExpression"])));
                pre.push(Stmt::Loop {
                    head,
                    body,
                    update,
                    do_while: node_type(s) == "DoWhileStatement",
                });
                if pre.len() == 1 {
                    pre.pop().expect("one")
                } else {
                    Stmt::Block(pre)
                }
            }
            "Break" => Stmt::Break(self.new_stmt(StmtKind::Other, src, BTreeSet::new(), BTreeSet::new())),
            "Continue" => Stmt::Continue(self.new_stmt(StmtKind::Other, src, BTreeSet::new(), BTreeSet::new())),
            "EmitStatement" => {
                let mut cx = Cx::new();
                self.expr(&s["eventCall"], &mut cx);
                self.wrap(cx, StmtKind::Other, src, None, Stmt::Node)
            }
            "InlineAssembly" => {
                let all: BTreeSet<VarRef> = self
                    .cur_contract_vars
                    .iter()
                    .map(|v| VarRef::whole(VarBase::State(*v)))
                    .collect();
                let id = self.new_stmt(StmtKind::Other, src, all.clone(), all);
                self.statements[id.index()].opaque = true;
                Stmt::Node(id)
            }
            "TryStatement" => {
                let mut cx = Cx::new();
                self.expr(&s["externalCall"], &mut cx);
                let clauses: Vec<&Value> = items(&s["clauses"]).collect();
                if let Some(first) = clauses.first() {
                    for p in items(&first["parameters"]["parameters"]) {
                        self.facts.assign(id_of(p), [Source::Fixed(Taint::UserInput)]);
                        cx.writes.insert(VarRef::whole(VarBase::Local(id_of(p))));
                    }
                }
                let call_src = s["externalCall"]["src"].as_str().unwrap_or(src);
                let (aux, head) = self.emit_split(cx, Some(StmtKind::Other), call_src, Some(call_src.to_string()));
                let then = Box::new(clauses.first().map_or(Stmt::Block(vec![]), |c| self.stmt(&c["block"])));
                let els = clauses.get(1).map(|c| Box::new(self.stmt(&c["block"])));
                prefix(aux, Stmt::If { head, then, els })
            }
            _ => {
                let id = self.new_stmt(StmtKind::Other, src, BTreeSet::new(), BTreeSet::new());
                Stmt::Node(id)
            }
        }
    }

    fn revert_node(&mut self, s: &'a Value) -> Stmt {
        let mut cx = Cx::new();
        let call = if s["expression"].is_object() {
            &s["expression"]
        } else {
            &s["errorCall"]
        };
        for a in items(&call["arguments"]) {
            self.expr(a, &mut cx);
        }
        self.wrap(cx, StmtKind::Other, s["src"].as_str().unwrap_or(""), None, Stmt::Revert)
    }

    fn wrap(&mut self, cx: Cx, hint: StmtKind, src: &str, top: Option<String>, make: fn(StmtId) -> Stmt) -> Stmt {
        let (aux, main) = self.emit_split(cx, Some(hint), src, top);
        prefix(aux, make(main))
    }

    fn emit(&mut self, cx: Cx, hint: Option<StmtKind>, src: &str, top: Option<String>) -> Vec<Stmt> {
        let (aux, main) = self.emit_split(cx, hint, src, top);
        aux.into_iter().chain([main]).map(Stmt::Node).collect()
    }

    /// Creates the statement's node, splitting calls into auxiliary nodes
    /// unless the statement is exactly one call.
    fn emit_split(&mut self, mut cx: Cx, hint: Option<StmtKind>, src: &str, top: Option<String>) -> (Vec<StmtId>, StmtId) {
        let mut reads = cx.scopes.pop().unwrap_or_default();
        let single = cx.calls.len() == 1 && top.is_some() && top.as_deref() == Some(cx.calls[0].src.as_str());
        let mut aux = Vec::new();
        if single {
            let pc = cx.calls.pop().expect("one call");
            reads.remove(&VarRef::whole(VarBase::Temp(pc.temp)));
            reads.extend(pc.reads);
            let kind = call_kind(&pc.site);
            let id = self.new_stmt(kind, src, reads, cx.writes);
            self.call_sources.insert(id, pc.addr_sources);
            self.statements[id.index()].call = Some(pc.site);
            return (aux, id);
        }
        for pc in cx.calls {
            let kind = call_kind(&pc.site);
            let writes = BTreeSet::from([VarRef::whole(VarBase::Temp(pc.temp))]);
            let id = self.new_stmt(kind, &pc.src, pc.reads, writes);
            self.call_sources.insert(id, pc.addr_sources);
            self.statements[id.index()].call = Some(pc.site);
            aux.push(id);
        }
        let kind = match hint {
            Some(StmtKind::Other) | Some(StmtKind::Assignment) | None => {
                if cx.writes.iter().any(|w| w.state_var().is_some()) {
                    StmtKind::StateWrite
                } else if !cx.writes.is_empty() {
                    StmtKind::Assignment
                } else if reads.iter().any(|r| r.state_var().is_some()) {
                    StmtKind::StateRead
                } else {
                    hint.unwrap_or(StmtKind::Other)
                }
            }
            Some(k) => k,
        };
        let id = self.new_stmt(kind, src, reads, cx.writes);
        (aux, id)
    }

    /// Storage or memory location denoted by an expression.
    fn place(&self, e: &Value) -> Option<VarRef> {
        match node_type(e) {
            "Identifier" => {
                let r = ref_of(e)?;
                if let Some(v) = self.state_of.get(&r) {
                    return Some(VarRef::whole(VarBase::State(*v)));
                }
                let decl = self.ast.get(r)?;
                (node_type(decl) == "VariableDeclaration").then(|| VarRef::whole(VarBase::Local(r)))
            }
            "IndexAccess" => {
                let mut p = self.place(&e["baseExpression"])?;
                let (key, constant) = if e["indexExpression"].is_object() {
                    self.key_text(&e["indexExpression"])
                } else {
                    ("*".to_string(), false)
                };
                p.path.push(Access::Index { key, constant });
                Some(p)
            }
            "MemberAccess" => {
                let mut p = self.place(&e["expression"])?;
                p.path.push(Access::Member(e["memberName"].as_str().unwrap_or("").to_string()));
                Some(p)
            }
            "TupleExpression" => {
                let comps: Vec<&Value> = items(&e["components"]).collect();
                if comps.len() == 1 {
                    self.place(comps[0])
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn key_text(&self, e: &Value) -> (String, bool) {
        match node_type(e) {
            "Literal" => (e["value"].as_str().unwrap_or("").to_string(), true),
            "Identifier" => {
                let name = e["name"].as_str().unwrap_or("");
                match ref_of(e) {
                    Some(r) if r >= 0 && r < u32::MAX as i64 - 1024 => {
                        let constant = self
                            .state_of
                            .get(&r)
                            .is_some_and(|v| self.state_vars[v.index()].constant);
                        (format!("{name}#{r}"), constant)
                    }
                    _ => (name.to_string(), false),
                }
            }
            "MemberAccess" => {
                let (base, _) = self.key_text(&e["expression"]);
                (format!("{base}.{}", e["memberName"].as_str().unwrap_or("")), false)
            }
            _ => {
                let text: String = self
                    .text(e["src"].as_str().unwrap_or(""))
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .collect();
                (text, false)
            }
        }
    }

    /// Reads inside an lvalue that are not the location itself: index
    /// expressions and non-place bases.
    fn lvalue_subexprs(&mut self, e: &'a Value, cx: &mut Cx) {
        match node_type(e) {
            "IndexAccess" => {
                self.lvalue_subexprs(&e["baseExpression"], cx);
                if e["indexExpression"].is_object() {
                    self.expr(&e["indexExpression"], cx);
                }
            }
            "MemberAccess" => self.lvalue_subexprs(&e["expression"], cx),
            "Identifier" => {}
            "TupleExpression" => {
                for c in items(&e["components"]).filter(|c| c.is_object()) {
                    self.lvalue_subexprs(c, cx);
                }
            }
            _ => self.expr(e, cx),
        }
    }

    fn write_lvalue(&mut self, e: &'a Value, cx: &mut Cx, also_read: bool, sources: &BTreeSet<Source>) {
        if node_type(e) == "TupleExpression" && items(&e["components"]).count() != 1 {
            for c in items(&e["components"]).filter(|c| c.is_object()) {
                self.write_lvalue(c, cx, also_read, sources);
            }
            return;
        }
        self.lvalue_subexprs(e, cx);
        if let Some(p) = self.place(e) {
            if also_read {
                cx.read(p.clone());
            }
            if let VarBase::Local(d) = p.base {
                self.facts.assign(d, sources.iter().copied());
            }
            cx.writes.insert(p);
        }
    }

    fn expr(&mut self, e: &'a Value, cx: &mut Cx) {
        match node_type(e) {
            "Identifier" => {
                if let Some(p) = self.place(e) {
                    cx.read(p);
                }
            }
            "MemberAccess" => match self.place(e) {
                Some(p) => {
                    self.lvalue_subexprs(&e["expression"], cx);
                    cx.read(p);
                }
                None => self.expr(&e["expression"], cx),
            },
            "IndexAccess" => {
                match self.place(e) {
                    Some(p) => {
                        self.lvalue_subexprs(&e["baseExpression"], cx);
                        cx.read(p);
                    }
                    None => self.expr(&e["baseExpression"], cx),
                }
                if e["indexExpression"].is_object() {
                    self.expr(&e["indexExpression"], cx);
                }
            }
            "IndexRangeAccess" => {
                for k in ["baseExpression", "startExpression", "endExpression"] {
                    if e[k].is_object() {
                        self.expr(&e[k], cx);
                    }
                }
            }
            "Assignment" => {
                self.expr(&e["rightHandSide"], cx);
                let s = self.sources(&e["rightHandSide"]);
                let compound = e["operator"].as_str() != Some("=");
                self.write_lvalue(&e["leftHandSide"], cx, compound, &s);
            }
            "UnaryOperation" => {
                let op = e["operator"].as_str().unwrap_or("");
                if op == "++" || op == "--" || op == "delete" {
                    self.write_lvalue(&e["subExpression"], cx, op != "delete", &BTreeSet::new());
                } else {
                    self.expr(&e["subExpression"], cx);
                }
            }
            "BinaryOperation" => {
                self.expr(&e["leftExpression"], cx);
                self.expr(&e["rightExpression"], cx);
            }
            "Conditional" => {
                for k in ["condition", "trueExpression", "falseExpression"] {
                    self.expr(&e[k], cx);
                }
            }
            "TupleExpression" => {
                for c in items(&e["components"]).filter(|c| c.is_object()) {
                    self.expr(c, cx);
                }
            }
            "FunctionCall" => self.call(e, cx),
            "FunctionCallOptions" => {
                self.expr(&e["expression"], cx);
                for o in items(&e["options"]) {
                    self.expr(o, cx);
                }
            }
            _ => {}
        }
    }

    fn call(&mut self, e: &'a Value, cx: &mut Cx) {
        let args: Vec<&'a Value> = items(&e["arguments"]).collect();
        match self.classify(e) {
            Classified::Conversion => {
                for a in args {
                    self.expr(a, cx);
                }
            }
            Classified::Builtin(base) => {
                if let Some(b) = base {
                    self.expr(b, cx);
                }
                for a in args {
                    self.expr(a, cx);
                }
            }
            Classified::ArrayMutation(base) => {
                for a in args {
                    self.expr(a, cx);
                }
                self.lvalue_subexprs(base, cx);
                if let Some(mut p) = self.place(base) {
                    cx.read(p.clone());
                    p.path.push(Access::Index {
                        key: "*".into(),
                        constant: false,
                    });
                    cx.writes.insert(p);
                }
            }
            Classified::Call(shape) => {
                cx.scopes.push(BTreeSet::new());
                if let Some(r) = shape.receiver {
                    self.expr(r, cx);
                }
                for o in &shape.options {
                    self.expr(o, cx);
                }
                for a in &args {
                    self.expr(a, cx);
                }
                let reads = cx.scopes.pop().unwrap_or_default();
                if let CallTarget::Internal(f) = shape.target {
                    let decls: Vec<i64> = self.functions_params(f);
                    // bound library calls pass the receiver as the first argument
                    let mut actuals: Vec<&Value> = Vec::new();
                    if self.meta[f.index()].is_library && node_type(&e["expression"]) == "MemberAccess" {
                        if let Some(r) = shape.receiver {
                            if decls.len() == args.len() + 1 {
                                actuals.push(r);
                            }
                        }
                    }
                    actuals.extend(args.iter().copied());
                    for (d, a) in decls.iter().zip(actuals) {
                        let s = self.sources(a);
                        self.facts.assign(*d, s);
                    }
                }
                let addr_sources = shape.address.map(|a| self.sources(a)).unwrap_or_default();
                let value_transfer = match shape.mechanism {
                    CallMechanism::Send | CallMechanism::Transfer => true,
                    _ => shape.value.is_some_and(|v| !is_zero_literal(v)),
                };
                let temp = self.next_temp;
                self.next_temp += 1;
                let src = e["src"].as_str().unwrap_or("").to_string();
                let site = CallSite {
                    target: shape.target,
                    mechanism: shape.mechanism,
                    name: shape.name,
                    value_transfer,
                    unlimited_gas: !matches!(shape.mechanism, CallMechanism::Send | CallMechanism::Transfer),
                    is_static: shape.is_static,
                    address: shape.address.map(|a| self.label(a["src"].as_str().unwrap_or(""))),
                    address_taint: Taint::Constant,
                    span: self.span(&src),
                };
                cx.read(VarRef::whole(VarBase::Temp(temp)));
                cx.calls.push(PendingCall {
                    site,
                    addr_sources,
                    reads,
                    temp,
                    src,
                });
            }
        }
    }

    fn functions_params(&self, f: FunctionId) -> Vec<i64> {
        self.ast
            .get(self.meta[f.index()].ast_id)
            .map(|n| items(&n["parameters"]["parameters"]).map(id_of).collect())
            .unwrap_or_default()
    }

    /// Follows an unimplemented function to its unique implementation.
    fn resolve_internal(&self, decl: i64) -> Option<FunctionId> {
        let fid = *self.func_of.get(&decl)?;
        if self.meta[fid.index()].implemented {
            return Some(fid);
        }
        let overrides: Vec<FunctionId> = self
            .meta
            .iter()
            .enumerate()
            .filter(|(_, m)| m.implemented && m.base_functions.contains(&decl))
            .map(|(i, _)| FunctionId(i as u32))
            .collect();
        match overrides.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    fn classify(&self, e: &'a Value) -> Classified<'a> {
        match e["kind"].as_str() {
            Some("typeConversion") | Some("structConstructorCall") => return Classified::Conversion,
            _ => {}
        }
        let mut callee = &e["expression"];
        let mut value = None;
        let mut options = Vec::new();
        loop {
            if node_type(callee) == "FunctionCallOptions" {
                for (n, o) in items(&callee["names"]).zip(items(&callee["options"])) {
                    if n.as_str() == Some("value") {
                        value = Some(o);
                    }
                    options.push(o);
                }
                callee = &callee["expression"];
            } else if node_type(callee) == "FunctionCall"
                && node_type(&callee["expression"]) == "MemberAccess"
                && matches!(callee["expression"]["memberName"].as_str(), Some("value") | Some("gas"))
                && type_string(&callee["expression"]["expression"]).starts_with("function")
            {
                let opt = items(&callee["arguments"]).next();
                if callee["expression"]["memberName"].as_str() == Some("value") {
                    value = opt;
                }
                options.extend(opt);
                callee = &callee["expression"]["expression"];
            } else {
                break;
            }
        }
        let shape = |target, mechanism, name: &str, address, receiver, is_static| {
            Classified::Call(CallShape {
                target,
                mechanism,
                name: name.to_string(),
                value,
                options: options.clone(),
                address,
                receiver,
                is_static,
            })
        };
        match node_type(callee) {
            "Identifier" => {
                let name = callee["name"].as_str().unwrap_or("");
                let Some(decl) = ref_of(callee).and_then(|r| self.ast.get(r)) else {
                    return Classified::Builtin(None);
                };
                if node_type(decl) != "FunctionDefinition" {
                    return Classified::Builtin(None);
                }
                match self.resolve_internal(id_of(decl)) {
                    Some(f) => shape(
                        CallTarget::Internal(f),
                        CallMechanism::Internal,
                        name,
                        None,
                        None,
                        self.meta[f.index()].view,
                    ),
                    None => Classified::Builtin(None),
                }
            }
            "MemberAccess" => {
                let base = &callee["expression"];
                let member = callee["memberName"].as_str().unwrap_or("");
                let bt = type_string(base);
                if bt.starts_with("address") && LOW_LEVEL.contains(&member) {
                    let mechanism = match member {
                        "send" => CallMechanism::Send,
                        "transfer" => CallMechanism::Transfer,
                        "delegatecall" => CallMechanism::DelegateCall,
                        "staticcall" => CallMechanism::StaticCall,
                        _ => CallMechanism::LowLevelCall,
                    };
                    return shape(
                        CallTarget::ExternalUnknown,
                        mechanism,
                        member,
                        Some(base),
                        Some(base),
                        mechanism == CallMechanism::StaticCall,
                    );
                }
                let decl = ref_of(callee).and_then(|r| self.ast.get(r));
                let Some(decl) = decl else {
                    if (member == "push" || member == "pop") && bt.contains("[]") {
                        return Classified::ArrayMutation(base);
                    }
                    return Classified::Builtin(Some(base));
                };
                match node_type(decl) {
                    "FunctionDefinition" => {
                        let fid = self.func_of.get(&id_of(decl)).copied();
                        let base_name = base["name"].as_str().unwrap_or("");
                        let is_ident = node_type(base) == "Identifier";
                        let lib = fid.is_some_and(|f| self.meta[f.index()].is_library);
                        if (is_ident && (base_name == "super" || base_name == "this")) || lib || bt.starts_with("type(") {
                            let target = if is_ident && base_name == "super" {
                                fid
                            } else {
                                self.resolve_internal(id_of(decl))
                            };
                            return match target {
                                Some(f) => shape(
                                    CallTarget::Internal(f),
                                    CallMechanism::Internal,
                                    member,
                                    None,
                                    (lib && !bt.starts_with("type(")).then_some(base),
                                    self.meta[f.index()].view,
                                ),
                                None => Classified::Builtin(Some(base)),
                            };
                        }
                        let is_static = is_view_node(decl) || fid.is_some_and(|f| self.meta[f.index()].view);
                        let target = match fid {
                            Some(f)
                                if self.meta[f.index()].implemented
                                    && self.contracts[self.meta[f.index()].contract.index()].kind
                                        == ContractKind::Contract =>
                            {
                                CallTarget::External(f)
                            }
                            _ => CallTarget::ExternalUnknown,
                        };
                        shape(target, CallMechanism::HighLevel, member, Some(base), Some(base), is_static)
                    }
                    "VariableDeclaration" => shape(
                        CallTarget::ExternalUnknown,
                        CallMechanism::HighLevel,
                        member,
                        Some(base),
                        Some(base),
                        true,
                    ),
                    _ => Classified::Builtin(Some(base)),
                }
            }
            _ => Classified::Builtin(Some(callee)),
        }
    }

    /// Taint sources of an expression's value.
    fn sources(&self, e: &Value) -> BTreeSet<Source> {
        let fixed = |t| BTreeSet::from([Source::Fixed(t)]);
        match node_type(e) {
            "Identifier" => {
                let name = e["name"].as_str().unwrap_or("");
                if name == "this" {
                    return fixed(Taint::Constant);
                }
                let Some(r) = ref_of(e) else {
                    return fixed(Taint::Constant);
                };
                if let Some(v) = self.state_of.get(&r) {
                    let sv = &self.state_vars[v.index()];
                    return fixed(if sv.constant || sv.immutable {
                        Taint::Constant
                    } else {
                        Taint::StateVariable
                    });
                }
                match self.ast.get(r) {
                    Some(d) if node_type(d) == "VariableDeclaration" => BTreeSet::from([Source::Var(r)]),
                    _ => fixed(Taint::Constant),
                }
            }
            "MemberAccess" => {
                let base = &e["expression"];
                if node_type(base) == "Identifier" {
                    match base["name"].as_str() {
                        Some("msg") | Some("tx") if ref_of(base).is_none_or(|r| r < 0 || r > i32::MAX as i64) => {
                            return fixed(Taint::UserInput)
                        }
                        Some("block") => return fixed(Taint::StateVariable),
                        _ => {}
                    }
                }
                if e["memberName"].as_str() == Some("balance") {
                    return fixed(Taint::StateVariable);
                }
                self.sources(base)
            }
            "IndexAccess" | "IndexRangeAccess" => {
                let s = self.sources(&e["baseExpression"]);
                if s.contains(&Source::Fixed(Taint::Constant)) && s.len() == 1 {
                    // indexing a constant array still depends on the index
                    return fixed(Taint::StateVariable);
                }
                s
            }
            "FunctionCall" => match self.classify(e) {
                Classified::Conversion => items(&e["arguments"]).flat_map(|a| self.sources(a)).collect(),
                Classified::Builtin(_) => {
                    let s: BTreeSet<Source> = items(&e["arguments"]).flat_map(|a| self.sources(a)).collect();
                    if s.is_empty() {
                        fixed(Taint::Constant)
                    } else {
                        s
                    }
                }
                Classified::ArrayMutation(_) => fixed(Taint::StateVariable),
                Classified::Call(c) => match c.target {
                    CallTarget::ExternalUnknown => fixed(Taint::UserInput),
                    _ => fixed(Taint::StateVariable),
                },
            },
            "Conditional" => {
                let mut s = self.sources(&e["trueExpression"]);
                s.extend(self.sources(&e["falseExpression"]));
                s
            }
            "TupleExpression" => items(&e["components"]).filter(|c| c.is_object()).flat_map(|c| self.sources(c)).collect(),
            "BinaryOperation" => {
                let mut s = self.sources(&e["leftExpression"]);
                s.extend(self.sources(&e["rightExpression"]));
                s
            }
            "UnaryOperation" => self.sources(&e["subExpression"]),
            "Assignment" => self.sources(&e["rightHandSide"]),
            _ => fixed(Taint::Constant),
        }
    }

    fn resolve_taint(&mut self) {
        let solved = self.facts.solve();
        for (sid, sources) in &self.call_sources {
            if let Some(call) = self.statements[sid.index()].call.as_mut() {
                call.address_taint = if call.address.is_some() {
                    taint::evaluate(sources, &solved)
                } else {
                    Taint::Constant
                };
            }
        }
    }
}

fn prefix(aux: Vec<StmtId>, main: Stmt) -> Stmt {
    if aux.is_empty() {
        main
    } else {
        Stmt::Block(aux.into_iter().map(Stmt::Node).chain([main]).collect())
    }
}

fn call_kind(site: &CallSite) -> StmtKind {
    if site.is_external() {
        StmtKind::ExternalCall
    } else {
        StmtKind::InternalCall
    }
}

/// `src` of the call if the expression is exactly one call.
fn top_call(e: &Value) -> Option<String> {
    match node_type(e) {
        "FunctionCall" => e["src"].as_str().map(str::to_string),
        "Assignment" if e["operator"].as_str() == Some("=") => top_call(&e["rightHandSide"]),
        _ => None,
    }
}

fn is_builtin_call(e: &Value, names: &[&str]) -> bool {
    node_type(e) == "FunctionCall"
        && node_type(&e["expression"]) == "Identifier"
        && names.contains(&e["expression"]["name"].as_str().unwrap_or(""))
        && ref_of(&e["expression"]).is_none_or(|r| r < 0 || r > i32::MAX as i64)
}

/// Whether a branch aborts unconditionally.
fn reverts(s: &Value) -> bool {
    match node_type(s) {
        "RevertStatement" | "Throw" => true,
        "ExpressionStatement" => is_builtin_call(&s["expression"], &["revert"]),
        "Block" | "UncheckedBlock" => items(&s["statements"]).any(reverts),
        _ => false,
    }
}

fn is_zero_literal(v: &Value) -> bool {
    node_type(v) == "Literal" && v["value"].as_str() == Some("0")
}

fn kind_is_library(c: &Value) -> bool {
    c["contractKind"].as_str() == Some("library")
}

fn function_kind(f: &Value, contract: &Value) -> FunctionKind {
    match f["kind"].as_str() {
        Some("constructor") => FunctionKind::Constructor,
        Some("fallback") => FunctionKind::Fallback,
        Some("receive") => FunctionKind::Receive,
        Some(_) => FunctionKind::Function,
        None => {
            // pre-0.5 schema
            let name = f["name"].as_str().unwrap_or("");
            if f["isConstructor"].as_bool() == Some(true) || name == contract["name"].as_str().unwrap_or("\0") {
                FunctionKind::Constructor
            } else if name.is_empty() {
                FunctionKind::Fallback
            } else {
                FunctionKind::Function
            }
        }
    }
}

fn kind_name(k: FunctionKind) -> &'static str {
    match k {
        FunctionKind::Constructor => "constructor",
        FunctionKind::Fallback => "fallback",
        FunctionKind::Receive => "receive",
        FunctionKind::Function => "function",
    }
}

fn mutability_of(f: &Value) -> String {
    if let Some(m) = f["stateMutability"].as_str() {
        return m.to_string();
    }
    if f["constant"].as_bool() == Some(true) {
        "view".into()
    } else if f["payable"].as_bool() == Some(true) {
        "payable".into()
    } else {
        "nonpayable".into()
    }
}

fn is_view_node(f: &Value) -> bool {
    let m = mutability_of(f);
    m == "view" || m == "pure"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn src_triples() {
        assert_eq!(parse_src("118:47:0"), (118, 47, 0));
        assert_eq!(parse_src("5:1:-1"), (5, 1, -1));
    }

    #[test]
    fn link_placeholders_are_zeroed() {
        let code = format!("73{}3014", "__$0123456789abcdef0123456789abcdef01$__");
        assert_eq!(zero_link_placeholders(&code), format!("73{}3014", "0".repeat(40)));
    }

    #[test]
    fn revert_detection() {
        let v: Value = serde_json::json!({
            "nodeType": "Block",
            "statements": [
                {"nodeType": "ExpressionStatement", "expression": {"nodeType": "Assignment"}},
                {"nodeType": "ExpressionStatement", "expression": {
                    "nodeType": "FunctionCall",
                    "expression": {"nodeType": "Identifier", "name": "revert", "referencedDeclaration": -19}
                }}
            ]
        });
        assert!(reverts(&v));
        assert!(!reverts(&serde_json::json!({"nodeType": "Block", "statements": []})));
    }
}
