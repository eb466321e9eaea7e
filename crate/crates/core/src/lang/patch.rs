//! Patches and their application as AST surgery.

use std::collections::BTreeMap;

use crate::error::LangError;
use crate::lang::ast::*;
use crate::lang::parser::check_program;
use crate::lang::printer::{bool_expr, stmt_inline};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatchKind {
    /// Insert a command sequence at the location's anchor.
    Insert { stmts: Vec<Stmt>, loc: Location },
    /// Skip the statement at the location whenever the condition holds.
    Guard { cond: BoolExpr, loc: Location },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    pub kind: PatchKind,
    /// Grammar rule ids that derived this patch, in leftmost-derivation order.
    pub derivation: Vec<usize>,
}

impl Patch {
    pub fn insert(stmts: Vec<Stmt>, loc: Location) -> Self {
        Patch { kind: PatchKind::Insert { stmts, loc }, derivation: Vec::new() }
    }

    pub fn guard(cond: BoolExpr, loc: Location) -> Self {
        Patch { kind: PatchKind::Guard { cond, loc }, derivation: Vec::new() }
    }

    pub fn location(&self) -> &Location {
        match &self.kind {
            PatchKind::Insert { loc, .. } | PatchKind::Guard { loc, .. } => loc,
        }
    }

    /// AST node count of the patch body.
    pub fn ast_size(&self) -> usize {
        match &self.kind {
            PatchKind::Insert { stmts, .. } => block_nodes(stmts),
            PatchKind::Guard { cond, .. } => 1 + cond.node_count(),
        }
    }

    /// Canonical one-line rendering; equal texts mean equal patches.
    pub fn text(&self) -> String {
        match &self.kind {
            PatchKind::Insert { stmts, loc } => {
                let body: Vec<String> = stmts.iter().map(stmt_inline).collect();
                format!("INSERT {} {}", loc, body.join(" "))
            }
            PatchKind::Guard { cond, loc } => format!("GUARD {} {}", loc, bool_expr(cond)),
        }
    }

    /// The patch with statements after an unconditional jump removed.
    pub fn live(&self) -> Patch {
        match &self.kind {
            PatchKind::Insert { stmts, loc } => {
                Patch { kind: PatchKind::Insert { stmts: live_block(stmts), loc: loc.clone() }, derivation: self.derivation.clone() }
            }
            PatchKind::Guard { .. } => self.clone(),
        }
    }

    /// Text of [`Patch::live`]; patches agreeing on it behave identically.
    pub fn live_text(&self) -> String {
        self.live().text()
    }
}

fn live_block(stmts: &[Stmt]) -> Vec<Stmt> {
    let mut out = Vec::new();
    for s in stmts {
        let mut s = s.clone();
        if let StmtKind::If { then_branch, else_branch, .. } = &mut s.kind {
            *then_branch = live_block(then_branch);
            *else_branch = live_block(else_branch);
        }
        let stop = matches!(s.kind, StmtKind::Return(_) | StmtKind::Goto(_) | StmtKind::Abort);
        out.push(s);
        if stop {
            break;
        }
    }
    out
}

/// Old statement ordinal to new ordinal, for the patched function.
pub type LocMap = BTreeMap<usize, usize>;

/// Applies `patch` to a copy of `program`. Statements of other functions are untouched.
pub fn apply_patch(program: &Program, patch: &Patch) -> Result<(Program, LocMap), LangError> {
    let loc = patch.location().clone();
    let mut out = program.clone();
    let func = out
        .function_mut(&loc.function)
        .ok_or_else(|| LangError::LocationNotFound(loc.clone()))?;
    if !splice(&mut func.body, &loc, &patch.kind) {
        return Err(LangError::LocationNotFound(loc));
    }
    let mut old_ids = Vec::new();
    func.visit(&mut |s| old_ids.push(s.id));
    func.renumber();
    let mut new_ids = Vec::new();
    func.visit(&mut |s| new_ids.push(s.id));
    let map = old_ids
        .into_iter()
        .zip(new_ids)
        .filter(|(old, _)| *old != usize::MAX)
        .collect();
    check_program(&mut out)?;
    Ok((out, map))
}

fn mark_fresh(stmts: &mut [Stmt]) {
    for s in stmts {
        s.id = usize::MAX;
        match &mut s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                mark_fresh(then_branch);
                mark_fresh(else_branch);
            }
            StmtKind::While { body, .. } => mark_fresh(body),
            _ => {}
        }
    }
}

fn splice(block: &mut Vec<Stmt>, loc: &Location, kind: &PatchKind) -> bool {
    let Some(pos) = block.iter().position(|s| s.id == loc.ordinal) else {
        for s in block.iter_mut() {
            let found = match &mut s.kind {
                StmtKind::If { then_branch, else_branch, .. } => {
                    splice(then_branch, loc, kind) || splice(else_branch, loc, kind)
                }
                StmtKind::While { body, .. } => splice(body, loc, kind),
                _ => false,
            };
            if found {
                return true;
            }
        }
        return false;
    };
    match kind {
        PatchKind::Insert { stmts, .. } => {
            let mut fresh = stmts.clone();
            mark_fresh(&mut fresh);
            let at = match loc.anchor {
                Anchor::Before => pos,
                Anchor::After => pos + 1,
            };
            block.splice(at..at, fresh);
        }
        PatchKind::Guard { cond, .. } => {
            let original = block.remove(pos);
            let mut wrapper = Stmt::new(StmtKind::If {
                cond: BoolExpr::not(cond.clone()),
                then_branch: vec![original],
                else_branch: Vec::new(),
            });
            wrapper.id = usize::MAX;
            block.insert(pos, wrapper);
        }
    }
    true
}
