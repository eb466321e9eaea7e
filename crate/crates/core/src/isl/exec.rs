use std::collections::{BTreeMap, BTreeSet};

use super::{AnalysisConfig, BugKind, Effect, ErrInfo, Exit, Footprint, SpatialAtom, SymState, Value};
use crate::error::AnalysisError;
use crate::lang::{BoolExpr, FunctionDef, Location, Operand, Program, RelOp, Stmt, StmtKind, VarKind};
use crate::solver::{eliminate, sat, Closure, IntTerm, Literal, PtrTerm, PureFormula};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cell {
    Val(PtrTerm),
    Freed,
}

#[derive(Debug, Clone)]
struct Path {
    pure: PureFormula,
    /// Input cells materialized on demand: source symbol to content symbol.
    pre_heap: BTreeMap<String, PtrTerm>,
    heap: BTreeMap<String, Cell>,
    /// Symbols standing for caller-provided values.
    inputs: BTreeSet<String>,
    /// Allocated symbol to the variable that received it.
    allocs: BTreeMap<String, String>,
    used: BTreeSet<String>,
    fresh: usize,
    trace: Vec<usize>,
    frames: Vec<BTreeMap<String, Value>>,
    jumps: BTreeMap<String, usize>,
}

impl Path {
    fn entry(f: &FunctionDef) -> Path {
        let mut frame = BTreeMap::new();
        let mut inputs = BTreeSet::new();
        for p in &f.params {
            let v = match p.kind {
                VarKind::Ptr => Value::Ptr(PtrTerm::sym(&p.name)),
                VarKind::Int => Value::Int(IntTerm::sym(&p.name)),
            };
            frame.insert(p.name.clone(), v);
            inputs.insert(p.name.clone());
        }
        Path {
            pure: PureFormula::tt(),
            pre_heap: BTreeMap::new(),
            heap: BTreeMap::new(),
            used: inputs.clone(),
            inputs,
            allocs: BTreeMap::new(),
            fresh: 0,
            trace: Vec::new(),
            frames: vec![frame],
            jumps: BTreeMap::new(),
        }
    }

    fn get(&self, var: &str) -> Option<Value> {
        self.frames.last()?.get(var).cloned()
    }

    fn set(&mut self, var: &str, v: Value) {
        if let Some(frame) = self.frames.last_mut() {
            frame.insert(var.to_string(), v);
        }
    }

    fn eval(&self, op: &Operand) -> Option<Value> {
        match op {
            Operand::Var(v) => self.get(v),
            Operand::Null => Some(Value::Ptr(PtrTerm::Nil)),
            Operand::Int(i) => Some(Value::Int(IntTerm::Const(*i))),
        }
    }

    fn eval_ptr(&self, op: &Operand) -> Option<PtrTerm> {
        match self.eval(op)? {
            Value::Ptr(t) => Some(t),
            Value::Int(_) => None,
        }
    }

    /// Symbol named after `base`, primed when the name is taken on this path.
    fn fresh_name(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut n = 2;
        while self.used.contains(&name) {
            name = format!("{base}'{n}");
            n += 1;
        }
        self.used.insert(name.clone());
        name
    }

    fn assume(&self, lits: &[Literal]) -> Option<Path> {
        let mut q = self.clone();
        for l in lits {
            q.pure.push(l.clone());
        }
        sat(&q.pure).then_some(q)
    }

    fn cell_of(&self, c: &Closure, t: &PtrTerm) -> Option<String> {
        self.heap.keys().find(|k| c.same_ptr(&PtrTerm::sym(k), t)).cloned()
    }

    fn input_of(&self, c: &Closure, t: &PtrTerm) -> Option<String> {
        self.inputs.iter().find(|s| c.same_ptr(&PtrTerm::sym(s), t)).cloned()
    }
}

enum Flow {
    Next,
    Return(Option<Value>),
    Err(ErrInfo),
    Abort,
    Jump(String),
}

enum Deref {
    Cell(Path, String),
    Nil(Path),
    Freed(Path),
    Drop,
}

struct Exec<'a> {
    program: &'a Program,
    cfg: AnalysisConfig,
    diagnostics: Vec<String>,
    truncated: bool,
}

type Outcomes = Vec<(Path, Flow)>;

impl Exec<'_> {
    fn live_cap(&self) -> usize {
        self.cfg.path_budget.saturating_mul(4).max(16)
    }

    fn function(&mut self, f: &FunctionDef, paths: Vec<Path>, depth: usize) -> Outcomes {
        let prefix = format!("{depth}:");
        let mut work: Vec<(usize, Path)> = paths
            .into_iter()
            .map(|mut p| {
                p.jumps.retain(|k, _| !k.starts_with(&prefix));
                (0, p)
            })
            .collect();
        let mut out = Vec::new();
        while !work.is_empty() {
            let (start, p) = work.remove(0);
            for (mut q, flow) in self.block(f, &f.body[start..], vec![p], depth) {
                match flow {
                    Flow::Next => out.push((q, Flow::Return(None))),
                    Flow::Jump(l) => {
                        let count = q.jumps.entry(format!("{prefix}{l}")).or_insert(0);
                        *count += 1;
                        if *count > self.cfg.unroll {
                            continue;
                        }
                        let Some(idx) = f.body.iter().position(|s| matches!(&s.kind, StmtKind::Label(x) if *x == l))
                        else {
                            continue;
                        };
                        work.push((idx, q));
                    }
                    other => out.push((q, other)),
                }
            }
            if out.len() + work.len() > self.live_cap() {
                self.truncated = true;
                work.truncate(self.live_cap().saturating_sub(out.len()));
            }
        }
        out
    }

    fn block(&mut self, f: &FunctionDef, stmts: &[Stmt], paths: Vec<Path>, depth: usize) -> Outcomes {
        let mut live = paths;
        let mut done = Vec::new();
        for s in stmts {
            let mut next = Vec::new();
            for p in live {
                for (q, flow) in self.stmt(f, s, p, depth) {
                    match flow {
                        Flow::Next => next.push(q),
                        other => done.push((q, other)),
                    }
                }
            }
            if next.len() > self.live_cap() {
                self.truncated = true;
                next.truncate(self.live_cap());
            }
            live = next;
            if live.is_empty() {
                break;
            }
        }
        done.extend(live.into_iter().map(|p| (p, Flow::Next)));
        done
    }

    fn deref(&self, p: Path, t: &PtrTerm) -> Deref {
        let c = Closure::new(&p.pure);
        if c.same_ptr(t, &PtrTerm::Nil) {
            return Deref::Nil(p);
        }
        if let Some(k) = p.cell_of(&c, t) {
            return match p.heap[&k] {
                Cell::Freed => Deref::Freed(p),
                Cell::Val(_) => Deref::Cell(p, k),
            };
        }
        // Unknown input pointer: assume a fresh valid cell, disjoint from known ones.
        let Some(src) = p.input_of(&c, t) else { return Deref::Drop };
        let mut q = p;
        q.pure.push(Literal::ptr_ne(t.clone(), PtrTerm::Nil));
        for k in q.heap.keys().cloned().collect::<Vec<_>>() {
            q.pure.push(Literal::ptr_ne(PtrTerm::Sym(k), t.clone()));
        }
        if !sat(&q.pure) {
            return Deref::Drop;
        }
        let content = format!("*{src}");
        q.used.insert(content.clone());
        q.inputs.insert(content.clone());
        q.pre_heap.insert(src.clone(), PtrTerm::Sym(content.clone()));
        q.heap.insert(src.clone(), Cell::Val(PtrTerm::Sym(content)));
        Deref::Cell(q, src)
    }

    fn err(kind: BugKind, loc: &Location, op: &Operand) -> Flow {
        Flow::Err(ErrInfo { kind, culprit: loc.clone(), var: op.as_var().map(String::from) })
    }

    fn stmt(&mut self, f: &FunctionDef, s: &Stmt, mut p: Path, depth: usize) -> Outcomes {
        if depth == 0 {
            p.trace.push(s.id);
        }
        let loc = Location::at(&f.name, s.id);
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let Some(v) = p.eval(value) else { return Vec::new() };
                p.set(target, v);
                vec![(p, Flow::Next)]
            }
            StmtKind::Load { target, ptr } => {
                let Some(t) = p.eval_ptr(ptr) else { return Vec::new() };
                match self.deref(p, &t) {
                    Deref::Cell(mut q, k) => {
                        if let Some(Cell::Val(v)) = q.heap.get(&k).cloned() {
                            q.set(target, Value::Ptr(v));
                        }
                        vec![(q, Flow::Next)]
                    }
                    Deref::Nil(q) => vec![(q, Self::err(BugKind::Npe, &loc, ptr))],
                    Deref::Freed(q) => vec![(q, Self::err(BugKind::UseAfterFree, &loc, ptr))],
                    Deref::Drop => Vec::new(),
                }
            }
            StmtKind::Store { ptr, value } => {
                let (Some(t), Some(v)) = (p.eval_ptr(ptr), p.eval_ptr(value)) else { return Vec::new() };
                match self.deref(p, &t) {
                    Deref::Cell(mut q, k) => {
                        q.heap.insert(k, Cell::Val(v));
                        vec![(q, Flow::Next)]
                    }
                    Deref::Nil(q) => vec![(q, Self::err(BugKind::Npe, &loc, ptr))],
                    Deref::Freed(q) => vec![(q, Self::err(BugKind::UseAfterFree, &loc, ptr))],
                    Deref::Drop => Vec::new(),
                }
            }
            StmtKind::Free { ptr } => {
                let Some(t) = p.eval_ptr(ptr) else { return Vec::new() };
                match self.deref(p, &t) {
                    Deref::Cell(mut q, k) => {
                        q.heap.insert(k, Cell::Freed);
                        vec![(q, Flow::Next)]
                    }
                    // free(NULL) does nothing
                    Deref::Nil(q) => vec![(q, Flow::Next)],
                    Deref::Freed(q) => vec![(q, Self::err(BugKind::DoubleFree, &loc, ptr))],
                    Deref::Drop => Vec::new(),
                }
            }
            StmtKind::Malloc { target } => {
                let sym = p.fresh_name(target);
                let x = PtrTerm::Sym(sym.clone());
                let mut fail = p.clone();
                fail.pure.push(Literal::ptr_eq(x.clone(), PtrTerm::Nil));
                fail.set(target, Value::Ptr(x.clone()));
                let mut ok = p;
                ok.pure.push(Literal::ptr_ne(x.clone(), PtrTerm::Nil));
                for k in ok.heap.keys().cloned().collect::<Vec<_>>() {
                    ok.pure.push(Literal::ptr_ne(PtrTerm::Sym(k), x.clone()));
                }
                ok.fresh += 1;
                let junk = format!("?{}", ok.fresh);
                ok.used.insert(junk.clone());
                ok.heap.insert(sym.clone(), Cell::Val(PtrTerm::Sym(junk)));
                ok.allocs.insert(sym, target.clone());
                ok.set(target, Value::Ptr(x));
                vec![(fail, Flow::Next), (ok, Flow::Next)]
            }
            StmtKind::Call { target, func, args } => {
                let Some(callee) = self.program.function(func) else {
                    self.diagnostics.push(format!("unknown callee `{func}`"));
                    return Vec::new();
                };
                let mut frame = BTreeMap::new();
                for (param, a) in callee.params.iter().zip(args) {
                    let Some(v) = p.eval(a) else { return Vec::new() };
                    frame.insert(param.name.clone(), v);
                }
                p.frames.push(frame);
                let mut out = Vec::new();
                for (mut q, flow) in self.function(callee, vec![p], depth + 1) {
                    match flow {
                        Flow::Return(v) => {
                            q.frames.pop();
                            match (target, v) {
                                (Some(t), Some(v)) => q.set(t, v),
                                (Some(_), None) => continue,
                                _ => {}
                            }
                            out.push((q, Flow::Next));
                        }
                        other => out.push((q, other)),
                    }
                }
                out
            }
            StmtKind::Abort => vec![(p, Flow::Abort)],
            StmtKind::If { cond, then_branch, else_branch } => {
                let (Some(pos), Some(neg)) = (dnf(&p, cond, true), dnf(&p, cond, false)) else {
                    return Vec::new();
                };
                let mut out = Vec::new();
                for conj in pos {
                    if let Some(q) = p.assume(&conj) {
                        out.extend(self.block(f, then_branch, vec![q], depth));
                    }
                }
                for conj in neg {
                    if let Some(q) = p.assume(&conj) {
                        out.extend(self.block(f, else_branch, vec![q], depth));
                    }
                }
                out
            }
            StmtKind::While { cond, body } => {
                let mut cur = vec![p];
                let mut out = Vec::new();
                for i in 0..=self.cfg.unroll {
                    let mut next = Vec::new();
                    for q in cur {
                        let (Some(pos), Some(neg)) = (dnf(&q, cond, true), dnf(&q, cond, false)) else {
                            continue;
                        };
                        for conj in neg {
                            if let Some(r) = q.assume(&conj) {
                                out.push((r, Flow::Next));
                            }
                        }
                        // paths needing one more iteration than the bound are dropped
                        if i == self.cfg.unroll {
                            continue;
                        }
                        for conj in pos {
                            if let Some(r) = q.assume(&conj) {
                                for (x, flow) in self.block(f, body, vec![r], depth) {
                                    match flow {
                                        Flow::Next => next.push(x),
                                        other => out.push((x, other)),
                                    }
                                }
                            }
                        }
                    }
                    cur = next;
                }
                out
            }
            StmtKind::Return(v) => {
                let v = match v {
                    Some(op) => match p.eval(op) {
                        Some(v) => Some(v),
                        None => return Vec::new(),
                    },
                    None => None,
                };
                vec![(p, Flow::Return(v))]
            }
            StmtKind::Goto(l) => vec![(p, Flow::Jump(l.clone()))],
            StmtKind::Label(_) | StmtKind::Skip => vec![(p, Flow::Next)],
        }
    }
}

fn cmp_literal(p: &Path, a: &Operand, op: RelOp, b: &Operand) -> Option<Literal> {
    match (p.eval(a)?, p.eval(b)?) {
        (Value::Ptr(x), Value::Ptr(y)) => match op {
            RelOp::Eq => Some(Literal::ptr_eq(x, y)),
            RelOp::Ne => Some(Literal::ptr_ne(x, y)),
            _ => None,
        },
        (Value::Int(x), Value::Int(y)) => Some(Literal::IntRel(x, op, y)),
        _ => None,
    }
}

fn cross(a: Vec<Vec<Literal>>, b: Vec<Vec<Literal>>) -> Vec<Vec<Literal>> {
    let mut out = Vec::new();
    for x in &a {
        for y in &b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.push(c);
        }
    }
    out
}

/// Pairwise-disjoint DNF of `e` (or of its negation when `pos` is false).
fn dnf(p: &Path, e: &BoolExpr, pos: bool) -> Option<Vec<Vec<Literal>>> {
    Some(match (e, pos) {
        (BoolExpr::True, true) | (BoolExpr::False, false) => vec![Vec::new()],
        (BoolExpr::True, false) | (BoolExpr::False, true) => Vec::new(),
        (BoolExpr::Not(x), _) => dnf(p, x, !pos)?,
        (BoolExpr::Cmp(a, op, b), _) => {
            let op = if pos { *op } else { op.negate() };
            vec![vec![cmp_literal(p, a, op, b)?]]
        }
        // a || b  ==  a  or  (!a && b)
        (BoolExpr::Or(a, b), true) => {
            let mut out = dnf(p, a, true)?;
            out.extend(cross(dnf(p, a, false)?, dnf(p, b, true)?));
            out
        }
        (BoolExpr::And(a, b), false) => {
            let mut out = dnf(p, a, false)?;
            out.extend(cross(dnf(p, a, true)?, dnf(p, b, false)?));
            out
        }
        (BoolExpr::And(a, b), true) => cross(dnf(p, a, true)?, dnf(p, b, true)?),
        (BoolExpr::Or(a, b), false) => cross(dnf(p, a, false)?, dnf(p, b, false)?),
    })
}

/// Allocated, live cells not reachable from an input or the returned value.
fn leaked(p: &Path, ret: &Option<Value>) -> Vec<String> {
    let c = Closure::new(&p.pure);
    let mut work: Vec<PtrTerm> = p.inputs.iter().map(|s| PtrTerm::sym(s)).collect();
    if let Some(Value::Ptr(t)) = ret {
        work.push(t.clone());
    }
    let mut seen = BTreeSet::new();
    while let Some(t) = work.pop() {
        for (k, cell) in &p.heap {
            if !seen.contains(k) && c.same_ptr(&PtrTerm::sym(k), &t) {
                seen.insert(k.clone());
                if let Cell::Val(v) = cell {
                    work.push(v.clone());
                }
            }
        }
    }
    p.allocs
        .keys()
        .filter(|k| matches!(p.heap.get(*k), Some(Cell::Val(_))) && !seen.contains(*k))
        .cloned()
        .collect()
}

fn effect(f: &FunctionDef, p: Path, exit: Exit, ret: Option<Value>, errinfo: Option<ErrInfo>) -> Effect {
    let mut pre_heap: Vec<SpatialAtom> = f
        .params
        .iter()
        .filter(|x| x.kind == VarKind::Ptr)
        .map(|x| SpatialAtom::VarPointsTo(x.name.clone(), Value::Ptr(PtrTerm::sym(&x.name))))
        .collect();
    pre_heap.extend(p.pre_heap.iter().map(|(k, v)| SpatialAtom::PointsTo(PtrTerm::sym(k), v.clone())));
    let pre_ex: BTreeSet<String> = p.pre_heap.values().map(|v| v.name().to_string()).collect();
    let hidden: BTreeSet<String> = p.pure.symbols().difference(&p.inputs).cloned().collect();
    let pre_pure = eliminate(&p.pure, &hidden).formula;

    let mut post_heap = Vec::new();
    let mut post_ex: BTreeSet<String> = p.allocs.keys().cloned().collect();
    post_ex.extend(pre_ex.iter().cloned());
    for (k, cell) in &p.heap {
        match cell {
            Cell::Val(v) => {
                if let PtrTerm::Sym(s) = v {
                    if !p.inputs.contains(s) || pre_ex.contains(s) {
                        post_ex.insert(s.clone());
                    }
                }
                post_heap.push(SpatialAtom::PointsTo(PtrTerm::sym(k), v.clone()))
            }
            Cell::Freed => post_heap.push(SpatialAtom::Dealloc(PtrTerm::sym(k))),
        }
    }
    Effect {
        pre: SymState { pure: pre_pure, heap: pre_heap, exvars: pre_ex },
        exit,
        post: SymState { pure: p.pure, heap: post_heap, exvars: post_ex },
        ret,
        trace: p.trace,
        errinfo,
    }
}

/// Footprint of `fname`, analysed with symbolic parameters.
pub fn summarize(program: &Program, fname: &str, cfg: &AnalysisConfig) -> Result<Footprint, AnalysisError> {
    let f = program.function(fname).ok_or_else(|| AnalysisError::UnknownFunction(fname.to_string()))?;
    let mut ex = Exec { program, cfg: *cfg, diagnostics: Vec::new(), truncated: false };
    let outcomes = ex.function(f, vec![Path::entry(f)], 0);
    let mut effects = Vec::new();
    for (p, flow) in outcomes {
        let e = match flow {
            Flow::Return(v) => {
                let leaks = leaked(&p, &v);
                match leaks.first() {
                    None => effect(f, p, Exit::Ok, v, None),
                    Some(sym) => {
                        let info = ErrInfo {
                            kind: BugKind::Leak,
                            culprit: Location::at(&f.name, *p.trace.last().unwrap_or(&0)),
                            var: p.allocs.get(sym).cloned(),
                        };
                        effect(f, p, Exit::Err, None, Some(info))
                    }
                }
            }
            Flow::Err(info) => {
                if info.culprit.function != f.name {
                    ex.diagnostics.push(format!(
                        "{} at {} manifests in callee; bug trace spans functions",
                        info.kind, info.culprit
                    ));
                    continue;
                }
                effect(f, p, Exit::Err, None, Some(info))
            }
            Flow::Abort => effect(f, p, Exit::Abort, None, None),
            Flow::Next | Flow::Jump(_) => continue,
        };
        effects.push(e);
    }
    let mut incomplete = ex.truncated;
    if effects.len() > cfg.path_budget {
        effects.truncate(cfg.path_budget);
        incomplete = true;
    }
    ex.diagnostics.sort();
    ex.diagnostics.dedup();
    Ok(Footprint { function: fname.to_string(), effects, incomplete, diagnostics: ex.diagnostics })
}
