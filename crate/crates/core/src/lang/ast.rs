//! Abstract syntax of the mini-language.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Ptr,
    Int,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Ptr => write!(f, "ptr"),
            VarKind::Int => write!(f, "int"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub kind: VarKind,
}

/// A leaf value: a variable, the null pointer, or an integer literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Var(String),
    Null,
    Int(i64),
}

impl Operand {
    pub fn var(name: &str) -> Self {
        Operand::Var(name.to_string())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelOp {
    Lt,
    Le,
    Eq,
    Ne,
    Gt,
    Ge,
}

impl RelOp {
    pub const ALL: [RelOp; 6] = [RelOp::Lt, RelOp::Le, RelOp::Eq, RelOp::Ne, RelOp::Gt, RelOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }

    pub fn negate(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Ge,
            RelOp::Le => RelOp::Gt,
            RelOp::Eq => RelOp::Ne,
            RelOp::Ne => RelOp::Eq,
            RelOp::Gt => RelOp::Le,
            RelOp::Ge => RelOp::Lt,
        }
    }

    /// The operator with its operands swapped: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Gt => RelOp::Lt,
            RelOp::Ge => RelOp::Le,
            op => op,
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
            RelOp::Gt => a > b,
            RelOp::Ge => a >= b,
        }
    }

    pub fn is_pointer_op(self) -> bool {
        matches!(self, RelOp::Eq | RelOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoolExpr {
    True,
    False,
    Or(Box<BoolExpr>, Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
    /// Comparison; whether it is an integer or a pointer relation follows
    /// from the kinds of its operands.
    Cmp(Operand, RelOp, Operand),
}

impl BoolExpr {
    pub fn cmp(lhs: Operand, op: RelOp, rhs: Operand) -> Self {
        BoolExpr::Cmp(lhs, op, rhs)
    }

    pub fn not(inner: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(inner))
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn node_count(&self) -> usize {
        match self {
            BoolExpr::True | BoolExpr::False => 1,
            BoolExpr::Cmp(..) => 3,
            BoolExpr::Not(e) => 1 + e.node_count(),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn operands(&self, out: &mut Vec<Operand>) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Cmp(a, _, b) => {
                out.push(a.clone());
                out.push(b.clone());
            }
            BoolExpr::Not(e) => e.operands(out),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.operands(out);
                b.operands(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    /// `v := e;`
    Assign { target: String, value: Operand },
    /// `v := [p];`
    Load { target: String, ptr: Operand },
    /// `[p] := q;`
    Store { ptr: Operand, value: Operand },
    /// `p := malloc();`
    Malloc { target: String },
    /// `free(p);`
    Free { ptr: Operand },
    /// `x := f(args);` or `f(args);`
    Call { target: Option<String>, func: String, args: Vec<Operand> },
    /// `abort();`
    Abort,
    If { cond: BoolExpr, then_branch: Vec<Stmt>, else_branch: Vec<Stmt> },
    While { cond: BoolExpr, body: Vec<Stmt> },
    Return(Option<Operand>),
    Goto(String),
    Label(String),
    Skip,
}

/// A statement together with its pre-order ordinal within the enclosing function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub id: usize,
    pub kind: StmtKind,
}

impl Stmt {
    /// Builds a statement with a placeholder ordinal; ordinals are assigned by
    /// [`FunctionDef::renumber`].
    pub fn new(kind: StmtKind) -> Self {
        Stmt { id: usize::MAX, kind }
    }

    pub fn children(&self) -> Vec<&Vec<Stmt>> {
        match &self.kind {
            StmtKind::If { then_branch, else_branch, .. } => vec![then_branch, else_branch],
            StmtKind::While { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }

    /// Number of AST nodes, used to rank patches by size.
    pub fn node_count(&self) -> usize {
        let operands = |ops: &[&Operand]| ops.len();
        match &self.kind {
            StmtKind::Assign { value, .. } => 1 + operands(&[value]) + 1,
            StmtKind::Load { ptr, .. } => 1 + operands(&[ptr]) + 1,
            StmtKind::Store { ptr, value } => 1 + operands(&[ptr, value]),
            StmtKind::Malloc { .. } => 2,
            StmtKind::Free { .. } => 2,
            StmtKind::Call { target, args, .. } => 2 + args.len() + usize::from(target.is_some()),
            StmtKind::Abort | StmtKind::Skip => 1,
            StmtKind::If { cond, then_branch, else_branch } => {
                1 + cond.node_count() + block_nodes(then_branch) + block_nodes(else_branch)
            }
            StmtKind::While { cond, body } => 1 + cond.node_count() + block_nodes(body),
            StmtKind::Return(v) => 1 + usize::from(v.is_some()),
            StmtKind::Goto(_) | StmtKind::Label(_) => 2,
        }
    }
}

pub fn block_nodes(stmts: &[Stmt]) -> usize {
    stmts.iter().map(Stmt::node_count).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Label name to the ordinal of its `L:` statement.
    pub labels: BTreeMap<String, usize>,
    /// Kinds of parameters and locals, filled in by the checker.
    pub var_kinds: BTreeMap<String, VarKind>,
    /// Kind of the returned value, if the function returns one.
    pub return_kind: Option<VarKind>,
}

impl FunctionDef {
    pub fn new(name: &str, params: Vec<Param>, body: Vec<Stmt>) -> Self {
        let mut f = FunctionDef {
            name: name.to_string(),
            params,
            body,
            labels: BTreeMap::new(),
            var_kinds: BTreeMap::new(),
            return_kind: None,
        };
        f.renumber();
        f
    }

    /// Reassigns pre-order ordinals to every statement and rebuilds the label map.
    pub fn renumber(&mut self) {
        fn walk(stmts: &mut [Stmt], next: &mut usize, labels: &mut BTreeMap<String, usize>) {
            for s in stmts {
                s.id = *next;
                *next += 1;
                if let StmtKind::Label(l) = &s.kind {
                    labels.insert(l.clone(), s.id);
                }
                match &mut s.kind {
                    StmtKind::If { then_branch, else_branch, .. } => {
                        walk(then_branch, next, labels);
                        walk(else_branch, next, labels);
                    }
                    StmtKind::While { body, .. } => walk(body, next, labels),
                    _ => {}
                }
            }
        }
        let mut next = 0;
        self.labels.clear();
        walk(&mut self.body, &mut next, &mut self.labels);
    }

    pub fn stmt_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Pre-order visit of every statement.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        fn walk<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
            for s in stmts {
                f(s);
                for c in s.children() {
                    walk(c, f);
                }
            }
        }
        walk(&self.body, f);
    }

    pub fn stmt(&self, ordinal: usize) -> Option<&Stmt> {
        let mut found = None;
        self.visit(&mut |s| {
            if s.id == ordinal {
                found = Some(s);
            }
        });
        found
    }

    pub fn kind_of(&self, var: &str) -> Option<VarKind> {
        self.var_kinds.get(var).copied()
    }

    pub fn location(&self, ordinal: usize, anchor: Anchor) -> Location {
        Location { function: self.name.clone(), ordinal, anchor }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<FunctionDef>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut FunctionDef> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    /// Function names in callee-first order over the call graph.
    pub fn bottom_up_order(&self) -> Vec<String> {
        fn visit(p: &Program, name: &str, seen: &mut Vec<String>) {
            if seen.iter().any(|s| s == name) {
                return;
            }
            if let Some(f) = p.function(name) {
                f.visit(&mut |s| {
                    if let StmtKind::Call { func, .. } = &s.kind {
                        visit(p, func, seen);
                    }
                });
            }
            if !seen.iter().any(|s| s == name) {
                seen.push(name.to_string());
            }
        }
        let mut seen = Vec::new();
        for f in &self.functions {
            visit(self, &f.name, &mut seen);
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Before,
    After,
}

/// A statement position inside a function.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub function: String,
    pub ordinal: usize,
    pub anchor: Anchor,
}

impl Location {
    pub fn at(function: &str, ordinal: usize) -> Self {
        Location { function: function.to_string(), ordinal, anchor: Anchor::After }
    }

    /// Same statement, ignoring the anchor.
    pub fn same_stmt(&self, other: &Location) -> bool {
        self.function == other.function && self.ordinal == other.ordinal
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let anchor = match self.anchor {
            Anchor::Before => "before",
            Anchor::After => "after",
        };
        write!(f, "{}#{}:{}", self.function, self.ordinal, anchor)
    }
}
