//! Bounded concrete interpreter used to reproduce reported bugs.
//!
//! Pointer inputs are either nil or a distinct fresh cell holding nil, int
//! inputs range over a small window, and every `malloc` outcome sequence is
//! enumerated. Heap cells hold pointers only.

use std::collections::{BTreeMap, BTreeSet};

use heapfix_core::isl::BugKind;
use heapfix_core::lang::{BoolExpr, FunctionDef, Operand, Program, RelOp, Stmt, StmtKind, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Val {
    Ptr(Option<usize>),
    Int(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Live(Option<usize>),
    Freed,
}

/// How one concrete run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok(Option<Val>),
    Abort,
    /// Error with the function and ordinal of the offending statement.
    Err(BugKind, String, usize),
    /// Fuel ran out or control reached an unsupported jump.
    Stuck,
}

enum Flow {
    Next,
    Ret(Option<Val>),
    Jump(String),
    Abort,
    Err(BugKind, String, usize),
    Stuck,
}

struct Machine<'a> {
    program: &'a Program,
    heap: Vec<Cell>,
    allocated: BTreeSet<usize>,
    choices: Vec<bool>,
    next_choice: usize,
    fuel: usize,
    /// Ordinal of the last statement started in the entry frame.
    last_top: usize,
}

const INT_WINDOW: [i64; 5] = [-2, -1, 0, 1, 2];
const FUEL: usize = 5_000;
const MAX_MALLOCS: usize = 8;

impl<'a> Machine<'a> {
    fn malloc(&mut self) -> Option<usize> {
        let ok = match self.choices.get(self.next_choice) {
            Some(&c) => c,
            None => {
                self.choices.push(true);
                true
            }
        };
        self.next_choice += 1;
        if !ok {
            return None;
        }
        self.heap.push(Cell::Live(None));
        let a = self.heap.len() - 1;
        self.allocated.insert(a);
        Some(a)
    }

    fn call(&mut self, f: &FunctionDef, args: Vec<Val>, depth: usize) -> Flow {
        let mut env: BTreeMap<String, Val> = BTreeMap::new();
        for (p, v) in f.params.iter().zip(args) {
            env.insert(p.name.clone(), v);
        }
        let mut i = 0;
        loop {
            let flow = self.block(f, &f.body[i..], &mut env, depth);
            match flow {
                Flow::Next => return Flow::Ret(None),
                Flow::Jump(l) => {
                    let target = f.body.iter().position(|s| matches!(&s.kind, StmtKind::Label(x) if *x == l));
                    match target {
                        Some(t) => i = t,
                        None => return Flow::Stuck,
                    }
                }
                other => return other,
            }
        }
    }

    fn block(&mut self, f: &FunctionDef, stmts: &[Stmt], env: &mut BTreeMap<String, Val>, depth: usize) -> Flow {
        for s in stmts {
            match self.stmt(f, s, env, depth) {
                Flow::Next => {}
                other => return other,
            }
        }
        Flow::Next
    }

    fn lookup(f: &FunctionDef, env: &BTreeMap<String, Val>, op: &Operand) -> Val {
        match op {
            Operand::Null => Val::Ptr(None),
            Operand::Int(k) => Val::Int(*k),
            Operand::Var(v) => env.get(v).copied().unwrap_or(match f.var_kinds.get(v) {
                Some(VarKind::Int) => Val::Int(0),
                _ => Val::Ptr(None),
            }),
        }
    }

    fn cond(f: &FunctionDef, env: &BTreeMap<String, Val>, c: &BoolExpr) -> bool {
        match c {
            BoolExpr::True => true,
            BoolExpr::False => false,
            BoolExpr::Not(a) => !Self::cond(f, env, a),
            BoolExpr::And(a, b) => Self::cond(f, env, a) && Self::cond(f, env, b),
            BoolExpr::Or(a, b) => Self::cond(f, env, a) || Self::cond(f, env, b),
            BoolExpr::Cmp(a, op, b) => match (Self::lookup(f, env, a), Self::lookup(f, env, b)) {
                (Val::Int(x), Val::Int(y)) => op.eval(x, y),
                (x, y) => match op {
                    RelOp::Eq => x == y,
                    RelOp::Ne => x != y,
                    _ => false,
                },
            },
        }
    }

    /// Resolves a dereference target or reports the error it raises.
    fn target(&self, f: &FunctionDef, s: &Stmt, v: Val) -> Result<usize, Flow> {
        match v {
            Val::Ptr(Some(a)) if self.heap[a] == Cell::Freed => Err(Flow::Err(BugKind::UseAfterFree, f.name.clone(), s.id)),
            Val::Ptr(Some(a)) => Ok(a),
            _ => Err(Flow::Err(BugKind::Npe, f.name.clone(), s.id)),
        }
    }

    fn stmt(&mut self, f: &FunctionDef, s: &Stmt, env: &mut BTreeMap<String, Val>, depth: usize) -> Flow {
        if self.fuel == 0 {
            return Flow::Stuck;
        }
        self.fuel -= 1;
        if depth == 0 {
            self.last_top = s.id;
        }
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let v = Self::lookup(f, env, value);
                env.insert(target.clone(), v);
            }
            StmtKind::Load { target, ptr } => {
                let a = match self.target(f, s, Self::lookup(f, env, ptr)) {
                    Ok(a) => a,
                    Err(e) => return e,
                };
                let Cell::Live(v) = self.heap[a] else { unreachable!() };
                env.insert(target.clone(), Val::Ptr(v));
            }
            StmtKind::Store { ptr, value } => {
                let a = match self.target(f, s, Self::lookup(f, env, ptr)) {
                    Ok(a) => a,
                    Err(e) => return e,
                };
                let v = match Self::lookup(f, env, value) {
                    Val::Ptr(v) => v,
                    Val::Int(_) => None,
                };
                self.heap[a] = Cell::Live(v);
            }
            StmtKind::Malloc { target } => {
                if self.next_choice >= MAX_MALLOCS {
                    return Flow::Stuck;
                }
                let a = self.malloc();
                env.insert(target.clone(), Val::Ptr(a));
            }
            StmtKind::Free { ptr } => match Self::lookup(f, env, ptr) {
                Val::Ptr(None) | Val::Int(_) => {}
                Val::Ptr(Some(a)) => {
                    if self.heap[a] == Cell::Freed {
                        return Flow::Err(BugKind::DoubleFree, f.name.clone(), s.id);
                    }
                    self.heap[a] = Cell::Freed;
                }
            },
            StmtKind::Call { target, func, args } => {
                let Some(g) = self.program.function(func) else { return Flow::Stuck };
                let vals = args.iter().map(|a| Self::lookup(f, env, a)).collect();
                match self.call(g, vals, depth + 1) {
                    Flow::Ret(v) => {
                        if let (Some(t), Some(v)) = (target, v) {
                            env.insert(t.clone(), v);
                        }
                    }
                    Flow::Next => {}
                    other => return other,
                }
            }
            StmtKind::Abort => return Flow::Abort,
            StmtKind::If { cond, then_branch, else_branch } => {
                let branch = if Self::cond(f, env, cond) { then_branch } else { else_branch };
                return self.block(f, branch, env, depth);
            }
            StmtKind::While { cond, body } => {
                while Self::cond(f, env, cond) {
                    match self.block(f, body, env, depth) {
                        Flow::Next => {}
                        other => return other,
                    }
                    if self.fuel == 0 {
                        return Flow::Stuck;
                    }
                }
            }
            StmtKind::Return(v) => return Flow::Ret(v.as_ref().map(|o| Self::lookup(f, env, o))),
            StmtKind::Goto(l) => return Flow::Jump(l.clone()),
            StmtKind::Label(_) | StmtKind::Skip => {}
        }
        Flow::Next
    }

    /// Allocated live cells not reachable from `roots`.
    fn leaks(&self, roots: &[Option<usize>]) -> bool {
        let mut seen = BTreeSet::new();
        let mut work: Vec<usize> = roots.iter().flatten().copied().collect();
        while let Some(a) = work.pop() {
            if !seen.insert(a) {
                continue;
            }
            if let Cell::Live(Some(b)) = self.heap[a] {
                work.push(b);
            }
        }
        self.allocated.iter().any(|a| self.heap[*a] != Cell::Freed && !seen.contains(a))
    }
}

/// One run of `f` on `inputs` with the given malloc outcome prefix. Returns
/// the outcome and the full list of malloc outcomes taken.
pub fn run(program: &Program, f: &FunctionDef, inputs: &[Option<i64>], prefix: &[bool]) -> (Outcome, Vec<bool>) {
    let mut m = Machine {
        program,
        heap: Vec::new(),
        allocated: BTreeSet::new(),
        choices: prefix.to_vec(),
        next_choice: 0,
        fuel: FUEL,
        last_top: 0,
    };
    let mut args = Vec::new();
    let mut roots = Vec::new();
    for (p, input) in f.params.iter().zip(inputs) {
        match p.kind {
            VarKind::Int => args.push(Val::Int(input.unwrap_or(0))),
            VarKind::Ptr => {
                // `Some(_)` marks a fresh input cell
                let v = input.map(|_| {
                    m.heap.push(Cell::Live(None));
                    m.heap.len() - 1
                });
                roots.push(v);
                args.push(Val::Ptr(v));
            }
        }
    }
    let outcome = match m.call(f, args, 0) {
        Flow::Ret(v) => {
            let mut r = roots.clone();
            if let Some(Val::Ptr(p)) = v {
                r.push(p);
            }
            if m.leaks(&r) {
                Outcome::Err(BugKind::Leak, f.name.clone(), m.last_top)
            } else {
                Outcome::Ok(v)
            }
        }
        Flow::Abort => Outcome::Abort,
        Flow::Err(k, func, ord) => Outcome::Err(k, func, ord),
        Flow::Next | Flow::Jump(_) | Flow::Stuck => Outcome::Stuck,
    };
    let taken = m.choices[..m.next_choice.min(m.choices.len())].to_vec();
    (outcome, taken)
}

fn input_vectors(f: &FunctionDef) -> Vec<Vec<Option<i64>>> {
    let mut out = vec![Vec::new()];
    for p in &f.params {
        let options: Vec<Option<i64>> = match p.kind {
            VarKind::Int => INT_WINDOW.iter().map(|k| Some(*k)).collect(),
            VarKind::Ptr => vec![None, Some(0)],
        };
        out = out
            .into_iter()
            .flat_map(|v| {
                options.iter().map(move |o| {
                    let mut w = v.clone();
                    w.push(*o);
                    w
                })
            })
            .collect();
    }
    out
}

/// Every outcome of `fname` over the bounded input space and all malloc
/// outcome sequences.
pub fn outcomes(program: &Program, fname: &str) -> Vec<Outcome> {
    let f = program.function(fname).expect("function exists");
    let mut all = Vec::new();
    for inputs in input_vectors(f) {
        let mut stack: Vec<Vec<bool>> = vec![Vec::new()];
        while let Some(prefix) = stack.pop() {
            let (o, taken) = run(program, f, &inputs, &prefix);
            for i in prefix.len()..taken.len() {
                let mut alt = taken[..i].to_vec();
                alt.push(false);
                stack.push(alt);
            }
            all.push(o);
        }
    }
    all
}

/// Whether some bounded run of `fname` raises `kind` at statement `ordinal`.
pub fn reproduces(program: &Program, fname: &str, kind: BugKind, ordinal: usize) -> bool {
    outcomes(program, fname)
        .iter()
        .any(|o| matches!(o, Outcome::Err(k, func, ord) if *k == kind && func == fname && *ord == ordinal))
}
