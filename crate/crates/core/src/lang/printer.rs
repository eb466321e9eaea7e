//! Pretty printer producing source text that re-parses to the same AST.

use std::fmt::Write;

use crate::lang::ast::*;

const INDENT: &str = "    ";

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(f, &mut out);
    }
    out
}

pub fn print_function(f: &FunctionDef, out: &mut String) {
    let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
    let _ = writeln!(out, "fn {}({}) {{", f.name, params.join(", "));
    print_block(&f.body, 1, out);
    out.push_str("}\n");
}

pub fn print_block(stmts: &[Stmt], depth: usize, out: &mut String) {
    for s in stmts {
        print_stmt(s, depth, out);
    }
}

pub fn operand(op: &Operand) -> String {
    match op {
        Operand::Var(v) => v.clone(),
        Operand::Null => "NULL".to_string(),
        Operand::Int(i) => i.to_string(),
    }
}

pub fn print_stmt(s: &Stmt, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{pad}{target} := {};", operand(value));
        }
        StmtKind::Load { target, ptr } => {
            let _ = writeln!(out, "{pad}{target} := [{}];", operand(ptr));
        }
        StmtKind::Store { ptr, value } => {
            let _ = writeln!(out, "{pad}[{}] := {};", operand(ptr), operand(value));
        }
        StmtKind::Malloc { target } => {
            let _ = writeln!(out, "{pad}{target} := malloc();");
        }
        StmtKind::Free { ptr } => {
            let _ = writeln!(out, "{pad}free({});", operand(ptr));
        }
        StmtKind::Call { target, func, args } => {
            let args: Vec<String> = args.iter().map(operand).collect();
            match target {
                Some(t) => {
                    let _ = writeln!(out, "{pad}{t} := {func}({});", args.join(", "));
                }
                None => {
                    let _ = writeln!(out, "{pad}{func}({});", args.join(", "));
                }
            }
        }
        StmtKind::Abort => {
            let _ = writeln!(out, "{pad}abort();");
        }
        StmtKind::Skip => {
            let _ = writeln!(out, "{pad}skip;");
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            let _ = writeln!(out, "{pad}if ({}) {{", bool_expr(cond));
            print_block(then_branch, depth + 1, out);
            if else_branch.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                print_block(else_branch, depth + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "{pad}while ({}) {{", bool_expr(cond));
            print_block(body, depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
        StmtKind::Return(None) => {
            let _ = writeln!(out, "{pad}return;");
        }
        StmtKind::Return(Some(v)) => {
            let _ = writeln!(out, "{pad}return {};", operand(v));
        }
        StmtKind::Goto(l) => {
            let _ = writeln!(out, "{pad}goto {l};");
        }
        StmtKind::Label(l) => {
            let _ = writeln!(out, "{pad}{l}:");
        }
    }
}

/// Statement text on a single line, used for patch display and dedup keys.
pub fn stmt_inline(s: &Stmt) -> String {
    let mut out = String::new();
    print_stmt(s, 0, &mut out);
    out.split('\n').map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}

#[derive(PartialEq, PartialOrd, Clone, Copy)]
enum Prec {
    Or,
    And,
    Atom,
}

pub fn bool_expr(b: &BoolExpr) -> String {
    print_bool(b, Prec::Or)
}

fn print_bool(b: &BoolExpr, ctx: Prec) -> String {
    let (text, prec) = match b {
        BoolExpr::True => ("true".to_string(), Prec::Atom),
        BoolExpr::False => ("false".to_string(), Prec::Atom),
        BoolExpr::Cmp(l, op, r) => {
            (format!("{} {} {}", operand(l), op.symbol(), operand(r)), Prec::Atom)
        }
        BoolExpr::Not(e) => {
            let inner = match **e {
                BoolExpr::True | BoolExpr::False | BoolExpr::Not(_) => print_bool(e, Prec::Atom),
                _ => format!("({})", print_bool(e, Prec::Or)),
            };
            (format!("!{inner}"), Prec::Atom)
        }
        BoolExpr::And(a, c) => {
            (format!("{} && {}", print_bool(a, Prec::And), print_bool(c, Prec::Atom)), Prec::And)
        }
        BoolExpr::Or(a, c) => {
            (format!("{} || {}", print_bool(a, Prec::Or), print_bool(c, Prec::And)), Prec::Or)
        }
    };
    if prec < ctx {
        format!("({text})")
    } else {
        text
    }
}
