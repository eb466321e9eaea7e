//! Fault localization over analysis paths and ingredient collection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::isl::Bug;
use crate::lang::{Anchor, FunctionDef, Location, Operand, Program, Stmt, StmtKind, VarKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixLocation {
    pub location: Location,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngredientSet {
    pub ptr_vars: Vec<String>,
    pub nonptr_vars: Vec<String>,
    /// Integer literals; `NULL` is always available separately.
    pub int_consts: Vec<i64>,
    pub labels: Vec<String>,
    /// Kind returned by the enclosing function, if any.
    pub return_kind: Option<VarKind>,
}

/// Ochiai suspiciousness of a statement.
pub fn ochiai(ef: usize, ep: usize, nf: usize) -> f64 {
    if ef == 0 {
        return 0.0;
    }
    ef as f64 / (((ef + nf) * (ef + ep)) as f64).sqrt()
}

fn is_jump(s: &Stmt) -> bool {
    matches!(s.kind, StmtKind::Return(_) | StmtKind::Goto(_) | StmtKind::Abort)
}

/// Scores every statement of the bug's function and returns the `top_n` best,
/// always including the culprit.
pub fn localize(program: &Program, bug: &Bug, top_n: usize) -> Vec<FixLocation> {
    let Some(f) = program.function(&bug.culprit.function) else { return Vec::new() };
    let failing = |e: &crate::isl::Effect| {
        e.errinfo.as_ref().is_some_and(|i| i.kind == bug.kind && i.culprit.same_stmt(&bug.culprit))
    };
    let total_fail = bug.footprint.effects.iter().filter(|e| failing(e)).count();
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for ord in 0..f.stmt_count() {
        let (mut ef, mut ep) = (0, 0);
        for e in &bug.footprint.effects {
            if e.trace.contains(&ord) {
                if failing(e) {
                    ef += 1;
                } else {
                    ep += 1;
                }
            }
        }
        scored.push((ord, ochiai(ef, ep, total_fail - ef)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<(usize, f64)> = scored.iter().copied().take(top_n.max(1)).collect();
    if !chosen.iter().any(|(o, _)| *o == bug.culprit.ordinal) {
        let culprit = scored.iter().copied().find(|(o, _)| *o == bug.culprit.ordinal).unwrap_or((bug.culprit.ordinal, 0.0));
        chosen.pop();
        chosen.push(culprit);
    }
    chosen
        .into_iter()
        .map(|(ord, score)| {
            let anchor = match f.stmt(ord) {
                Some(s) if is_jump(s) => Anchor::Before,
                _ => Anchor::After,
            };
            FixLocation { location: f.location(ord, anchor), score }
        })
        .collect()
}

fn defined_target(s: &Stmt) -> Option<&str> {
    match &s.kind {
        StmtKind::Assign { target, .. } | StmtKind::Load { target, .. } | StmtKind::Malloc { target } => Some(target),
        StmtKind::Call { target: Some(t), .. } => Some(t),
        _ => None,
    }
}

fn last_descendant(s: &Stmt) -> usize {
    s.children().into_iter().flatten().map(last_descendant).max().unwrap_or(s.id).max(s.id)
}

/// Variables visible to code inserted at `loc` (the checker's pre-order rule).
pub fn scope_at(f: &FunctionDef, loc: &Location) -> BTreeSet<String> {
    let Some(s) = f.stmt(loc.ordinal) else { return BTreeSet::new() };
    let limit = match loc.anchor {
        Anchor::Before => loc.ordinal,
        Anchor::After => last_descendant(s) + 1,
    };
    let mut vars: BTreeSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
    f.visit(&mut |s| {
        if s.id < limit {
            if let Some(t) = defined_target(s) {
                vars.insert(t.to_string());
            }
        }
    });
    vars
}

/// Undirected pointer data-flow edges of a function.
fn flow_edges(f: &FunctionDef) -> BTreeMap<String, BTreeSet<String>> {
    let mut edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let is_ptr = |v: &str| f.kind_of(v) == Some(VarKind::Ptr);
    let mut link = |a: &str, b: &str| {
        edges.entry(a.to_string()).or_default().insert(b.to_string());
        edges.entry(b.to_string()).or_default().insert(a.to_string());
    };
    f.visit(&mut |s| match &s.kind {
        StmtKind::Assign { target, value: Operand::Var(v) } if is_ptr(target) && is_ptr(v) => link(target, v),
        StmtKind::Load { target, ptr: Operand::Var(v) } => link(target, v),
        StmtKind::Store { ptr: Operand::Var(p), value: Operand::Var(v) } => link(p, v),
        StmtKind::Call { target, args, .. } => {
            let ptr_args: Vec<&str> = args.iter().filter_map(Operand::as_var).filter(|v| is_ptr(v)).collect();
            if let Some(t) = target.as_deref().filter(|t| is_ptr(t)) {
                for a in &ptr_args {
                    link(t, a);
                }
            }
            for w in ptr_args.windows(2) {
                link(w[0], w[1]);
            }
        }
        _ => {}
    });
    edges
}

/// Pointer variables reachable from `start` over data-flow edges.
pub fn taint_closure(f: &FunctionDef, start: &str) -> BTreeSet<String> {
    let edges = flow_edges(f);
    let mut seen = BTreeSet::from([start.to_string()]);
    let mut work = vec![start.to_string()];
    while let Some(v) = work.pop() {
        for w in edges.get(&v).into_iter().flatten() {
            if seen.insert(w.clone()) {
                work.push(w.clone());
            }
        }
    }
    seen
}

fn int_literals(f: &FunctionDef) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    let mut take = |o: &Operand| {
        if let Operand::Int(i) = o {
            out.insert(*i);
        }
    };
    f.visit(&mut |s| {
        let mut ops = Vec::new();
        match &s.kind {
            StmtKind::Assign { value, .. } => ops.push(value.clone()),
            StmtKind::Call { args, .. } => ops.extend(args.iter().cloned()),
            StmtKind::Return(Some(v)) => ops.push(v.clone()),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond.operands(&mut ops),
            _ => {}
        }
        for o in &ops {
            take(o);
        }
    });
    out
}

/// Ingredients usable at every one of `locs`.
pub fn collect_ingredients(program: &Program, bug: &Bug, locs: &[Location]) -> IngredientSet {
    let Some(f) = program.function(&bug.culprit.function) else { return IngredientSet::default() };
    let mut scope: Option<BTreeSet<String>> = None;
    for loc in locs {
        let s = scope_at(f, loc);
        scope = Some(match scope {
            None => s,
            Some(prev) => prev.intersection(&s).cloned().collect(),
        });
    }
    let scope = scope.unwrap_or_default();
    let tainted = match &bug.var {
        Some(v) => taint_closure(f, v),
        None => scope.clone(),
    };
    let ptr_vars = scope
        .iter()
        .filter(|v| f.kind_of(v) == Some(VarKind::Ptr) && tainted.contains(*v))
        .cloned()
        .collect();
    let nonptr_vars = scope.iter().filter(|v| f.kind_of(v) == Some(VarKind::Int)).cloned().collect();
    let mut consts = int_literals(f);
    consts.extend([0, -1]);
    IngredientSet {
        ptr_vars,
        nonptr_vars,
        int_consts: consts.into_iter().collect(),
        labels: f.labels.keys().cloned().collect(),
        return_kind: f.return_kind,
    }
}
