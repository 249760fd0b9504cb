//! Statement-level contract model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub const MODEL_VERSION: u32 = 1;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(ContractId, "c");
id_type!(FunctionId, "f");
id_type!(StmtId, "s");
id_type!(StateVarId, "v");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// Source unit name as given to the compiler.
    pub path: String,
    /// Compiler source index, as used in `src` attributes and source maps.
    pub index: u32,
    pub sha256: String,
    #[serde(skip)]
    pub line_starts: Vec<u32>,
}

impl SourceFile {
    /// 1-based line of a byte offset.
    pub fn line_of(&self, offset: u32) -> u32 {
        match self.line_starts.binary_search(&offset) {
            Ok(i) => i as u32 + 1,
            Err(i) => i as u32,
        }
    }

    pub fn column_of(&self, offset: u32) -> u32 {
        let line = self.line_of(offset);
        offset - self.line_starts[(line - 1) as usize] + 1
    }
}

pub fn line_starts(text: &str) -> Vec<u32> {
    std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i as u32 + 1))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    /// Compiler source index.
    pub file: u32,
    pub start: u32,
    pub length: u32,
    pub line: u32,
    pub end_line: u32,
}

impl Span {
    pub fn end(&self) -> u32 {
        self.start + self.length
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.file == other.file && self.start <= other.start && other.end() <= self.end()
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.file == other.file && self.start < other.end() && other.start < self.end()
    }

    pub fn lines(&self) -> std::ops::RangeInclusive<u32> {
        self.line..=self.end_line
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractKind {
    Contract,
    Interface,
    Library,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub id: ContractId,
    pub name: String,
    pub kind: ContractKind,
    pub is_abstract: bool,
    pub file: u32,
    pub span: Span,
    /// Linearized bases, most derived first, excluding the contract itself.
    pub bases: Vec<ContractId>,
    /// Storage variables including inherited ones, in declaration order.
    pub state_vars: Vec<StateVarId>,
    /// Callable functions including inherited, non-overridden ones.
    pub functions: Vec<FunctionId>,
    pub constructor: Option<FunctionId>,
    pub ast_id: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVar {
    pub id: StateVarId,
    pub contract: ContractId,
    pub name: String,
    pub type_string: String,
    pub constant: bool,
    pub immutable: bool,
    /// Storage slot from the compiler's storage layout, if known.
    pub slot: Option<String>,
    pub span: Span,
    pub ast_id: i64,
}

impl StateVar {
    pub fn is_mapping(&self) -> bool {
        self.type_string.starts_with("mapping(")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    Function,
    Constructor,
    Fallback,
    Receive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Visibility {
    Public,
    External,
    Internal,
    Private,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierUse {
    pub name: String,
    pub span: Span,
    pub ast_id: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub id: FunctionId,
    /// Declaring contract.
    pub contract: ContractId,
    pub name: String,
    pub kind: FunctionKind,
    pub visibility: Visibility,
    pub mutability: String,
    pub params: Vec<String>,
    /// Compiler type strings of the parameters, with data location.
    pub param_types: Vec<String>,
    pub param_decls: Vec<i64>,
    pub modifiers: Vec<ModifierUse>,
    pub selector: Option<String>,
    pub span: Span,
    /// Span of the header, from `function` to the body's opening brace.
    pub header: Span,
    pub entry: StmtId,
    pub exit: StmtId,
    pub body: Option<Stmt>,
    pub ast_id: i64,
}

impl Function {
    /// Reachable by an external transaction.
    pub fn externally_callable(&self) -> bool {
        match self.kind {
            FunctionKind::Constructor => false,
            FunctionKind::Fallback | FunctionKind::Receive => true,
            FunctionKind::Function => {
                matches!(self.visibility, Visibility::Public | Visibility::External)
            }
        }
    }

    pub fn is_view(&self) -> bool {
        self.mutability == "view" || self.mutability == "pure"
    }
}

/// Structured body: how statement nodes are connected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stmt {
    Node(StmtId),
    Block(Vec<Stmt>),
    If {
        head: StmtId,
        then: Box<Stmt>,
        els: Option<Box<Stmt>>,
    },
    Loop {
        head: StmtId,
        body: Box<Stmt>,
        update: Option<Box<Stmt>>,
        do_while: bool,
    },
    /// Continues after the innermost enclosing scope.
    Return(StmtId),
    Break(StmtId),
    Continue(StmtId),
    /// Aborts the transaction.
    Revert(StmtId),
    /// Passes or aborts.
    Require(StmtId),
    /// A modifier placeholder expansion, or the function body itself.
    Scope(Box<Stmt>),
}

impl Stmt {
    pub fn nodes(&self, out: &mut Vec<StmtId>) {
        match self {
            Stmt::Node(s)
            | Stmt::Return(s)
            | Stmt::Break(s)
            | Stmt::Continue(s)
            | Stmt::Revert(s)
            | Stmt::Require(s) => out.push(*s),
            Stmt::Block(items) => items.iter().for_each(|i| i.nodes(out)),
            Stmt::If { head, then, els } => {
                out.push(*head);
                then.nodes(out);
                if let Some(e) = els {
                    e.nodes(out);
                }
            }
            Stmt::Loop {
                head, body, update, ..
            } => {
                out.push(*head);
                body.nodes(out);
                if let Some(u) = update {
                    u.nodes(out);
                }
            }
            Stmt::Scope(inner) => inner.nodes(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarBase {
    State(StateVarId),
    /// Local variable or parameter, by declaration id.
    Local(i64),
    /// Result of a split-out call.
    Temp(u32),
    /// Return value of a function.
    Ret(FunctionId),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Access {
    Index { key: String, constant: bool },
    Member(String),
}

/// A storage or memory location: a variable plus an access path.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub base: VarBase,
    pub path: Vec<Access>,
}

impl VarRef {
    pub fn whole(base: VarBase) -> Self {
        VarRef {
            base,
            path: Vec::new(),
        }
    }

    pub fn state_var(&self) -> Option<StateVarId> {
        match self.base {
            VarBase::State(v) => Some(v),
            _ => None,
        }
    }

    /// Whether the two locations may overlap. Index keys only disambiguate
    /// when both are constants.
    pub fn may_alias(&self, other: &VarRef) -> bool {
        if self.base != other.base {
            return false;
        }
        for (a, b) in self.path.iter().zip(&other.path) {
            match (a, b) {
                (Access::Member(x), Access::Member(y)) if x != y => return false,
                (
                    Access::Index {
                        key: x,
                        constant: true,
                    },
                    Access::Index {
                        key: y,
                        constant: true,
                    },
                ) if x != y => return false,
                _ => {}
            }
        }
        true
    }

    /// Whether writing `self` overwrites every location of `other`.
    pub fn kills(&self, other: &VarRef) -> bool {
        self.path.is_empty() && self.base == other.base
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.base {
            VarBase::State(v) => write!(f, "{v}")?,
            VarBase::Local(d) => write!(f, "l{d}")?,
            VarBase::Temp(t) => write!(f, "$t{t}")?,
            VarBase::Ret(func) => write!(f, "$ret.{func}")?,
        }
        for a in &self.path {
            match a {
                Access::Index { key, .. } => write!(f, "[{key}]")?,
                Access::Member(m) => write!(f, ".{m}")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StmtKind {
    Entry,
    Exit,
    Assignment,
    ConditionCheck,
    ExternalCall,
    InternalCall,
    StateWrite,
    StateRead,
    Return,
    LoopHeader,
    Other,
}

/// Who can choose an address value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Taint {
    Constant,
    StateVariable,
    UserInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallTarget {
    Internal(FunctionId),
    /// Statically typed call into a contract whose implementation is known.
    External(FunctionId),
    ExternalUnknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallMechanism {
    Internal,
    HighLevel,
    LowLevelCall,
    Send,
    Transfer,
    DelegateCall,
    StaticCall,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub target: CallTarget,
    pub mechanism: CallMechanism,
    /// Member or function name as written.
    pub name: String,
    pub value_transfer: bool,
    /// False for `send`/`transfer`, which forward only a stipend.
    pub unlimited_gas: bool,
    pub is_static: bool,
    /// Source text of the address expression for external calls.
    pub address: Option<String>,
    pub address_taint: Taint,
    /// Span of the call expression.
    pub span: Span,
}

impl CallSite {
    pub fn is_external(&self) -> bool {
        !matches!(self.target, CallTarget::Internal(_))
    }

    pub fn resolved(&self) -> Option<FunctionId> {
        match self.target {
            CallTarget::Internal(f) | CallTarget::External(f) => Some(f),
            CallTarget::ExternalUnknown => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: StmtId,
    pub function: FunctionId,
    pub kind: StmtKind,
    pub reads: BTreeSet<VarRef>,
    pub writes: BTreeSet<VarRef>,
    pub call: Option<CallSite>,
    pub span: Span,
    /// Short source excerpt for rendering.
    pub label: String,
    /// Inline assembly: reads and writes all state.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub opaque: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bytecode {
    /// Deployed (runtime) code, hex without prefix; link placeholders zeroed.
    pub deployed: String,
    pub source_map: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractModel {
    pub version: u32,
    pub compiler: String,
    pub files: Vec<SourceFile>,
    pub contracts: Vec<Contract>,
    pub state_vars: Vec<StateVar>,
    pub functions: Vec<Function>,
    pub statements: Vec<Statement>,
    /// By contract name; absent for stage-1-only loads and abstract units.
    pub bytecode: BTreeMap<String, Bytecode>,
}

impl ContractModel {
    pub fn contract(&self, id: ContractId) -> &Contract {
        &self.contracts[id.index()]
    }

    pub fn function(&self, id: FunctionId) -> &Function {
        &self.functions[id.index()]
    }

    pub fn stmt(&self, id: StmtId) -> &Statement {
        &self.statements[id.index()]
    }

    pub fn state_var(&self, id: StateVarId) -> &StateVar {
        &self.state_vars[id.index()]
    }

    pub fn contract_by_name(&self, name: &str) -> Option<&Contract> {
        self.contracts.iter().find(|c| c.name == name)
    }

    /// Functions of `contract` (flattened) with the given name.
    pub fn functions_named(&self, contract: &str, name: &str) -> Vec<&Function> {
        self.contract_by_name(contract)
            .into_iter()
            .flat_map(|c| c.functions.iter())
            .map(|f| self.function(*f))
            .filter(|f| f.name == name)
            .collect()
    }

    pub fn file(&self, index: u32) -> Option<&SourceFile> {
        self.files.iter().find(|f| f.index == index)
    }

    /// `Contract.function` display name.
    pub fn qualified_name(&self, f: FunctionId) -> String {
        let func = self.function(f);
        let name = match func.kind {
            FunctionKind::Constructor => "constructor",
            FunctionKind::Fallback => "fallback",
            FunctionKind::Receive => "receive",
            FunctionKind::Function => &func.name,
        };
        format!("{}.{}", self.contract(func.contract).name, name)
    }

    /// Every statement of a function: entry, body nodes, exit.
    pub fn function_nodes(&self, f: FunctionId) -> Vec<StmtId> {
        let func = self.function(f);
        let mut out = vec![func.entry];
        if let Some(body) = &func.body {
            body.nodes(&mut out);
        }
        out.push(func.exit);
        out
    }

    /// Call graph: call-site statement to resolved callee or unknown.
    pub fn call_graph(&self) -> BTreeMap<StmtId, CallTarget> {
        self.statements
            .iter()
            .filter_map(|s| s.call.as_ref().map(|c| (s.id, c.target)))
            .collect()
    }

    /// Functions that can run inside a transaction entering at `root`,
    /// following resolved calls.
    pub fn reachable_functions(&self, root: FunctionId) -> BTreeSet<FunctionId> {
        let mut seen = BTreeSet::from([root]);
        let mut work = vec![root];
        while let Some(f) = work.pop() {
            for s in self.function_nodes(f) {
                if let Some(callee) = self.stmt(s).call.as_ref().and_then(CallSite::resolved) {
                    if seen.insert(callee) {
                        work.push(callee);
                    }
                }
            }
        }
        seen
    }

    /// Deterministic JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut model: ContractModel = serde_json::from_str(text)?;
        // line tables are not serialized; spans already carry line numbers
        for f in &mut model.files {
            f.line_starts = vec![0];
        }
        Ok(model)
    }
}
