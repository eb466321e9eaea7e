//! Lexer, recursive-descent parser and semantic checker for `.mc` sources.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::LangError;
use crate::lang::ast::*;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 20] = [
    ":=", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ";", ",", ":", "<", ">",
    "!", "-",
];

fn lex(src: &str) -> Result<Vec<Token>, LangError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Token { tok: Tok::Ident(s), line: start_line, col: start_col });
            continue;
        }
        let negative_lit = c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit());
        if c.is_ascii_digit() || negative_lit {
            let mut s = String::new();
            if negative_lit {
                s.push('-');
                i += 1;
                col += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            let v = s.parse::<i64>().map_err(|_| LangError::Syntax {
                line: start_line,
                col: start_col,
                msg: format!("integer literal out of range: {s}"),
            })?;
            out.push(Token { tok: Tok::Int(v), line: start_line, col: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let sym = SYMBOLS.iter().find(|s| rest.starts_with(**s));
        match sym {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token { tok: Tok::Sym(s), line: start_line, col: start_col });
            }
            None => {
                return Err(LangError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

const KEYWORDS: [&str; 15] = [
    "fn", "if", "else", "while", "return", "goto", "free", "malloc", "abort", "skip", "NULL",
    "true", "false", "ptr", "int",
];

/// Source position of each statement, keyed by (function, ordinal).
pub type SpanMap = BTreeMap<(String, usize), (usize, usize)>;

type LineCol = (usize, usize);

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    spans: Vec<(usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LangError> {
        let (line, col) = self.here();
        Err(LangError::Syntax { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), LangError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), LangError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, LangError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn program(&mut self) -> Result<Vec<(FunctionDef, Vec<LineCol>)>, LangError> {
        let mut fns = Vec::new();
        while *self.peek() != Tok::Eof {
            self.spans.clear();
            let f = self.function()?;
            fns.push((f, std::mem::take(&mut self.spans)));
        }
        Ok(fns)
    }

    fn function(&mut self) -> Result<FunctionDef, LangError> {
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let pname = self.ident()?;
                self.expect_sym(":")?;
                let kind = if self.is_kw("ptr") {
                    VarKind::Ptr
                } else if self.is_kw("int") {
                    VarKind::Int
                } else {
                    return self.err("expected `ptr` or `int`");
                };
                self.bump();
                params.push(Param { name: pname, kind });
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let body = self.block()?;
        let mut f = FunctionDef::new(&name, params, body);
        f.renumber();
        Ok(f)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unexpected end of input, expected `}`");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn operand(&mut self) -> Result<Operand, LangError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Operand::Int(v))
            }
            Tok::Ident(s) if s == "NULL" => {
                self.bump();
                Ok(Operand::Null)
            }
            Tok::Ident(_) => Ok(Operand::Var(self.ident()?)),
            t => self.err(format!("expected operand, found {}", describe(&t))),
        }
    }

    fn args(&mut self) -> Result<Vec<Operand>, LangError> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.operand()?);
                if self.is_sym(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        // Statements are recorded in pre-order, matching `FunctionDef::renumber`.
        let slot = self.spans.len();
        self.spans.push(self.here());
        let kind = self.stmt_kind()?;
        debug_assert!(slot < self.spans.len());
        Ok(Stmt::new(kind))
    }

    fn stmt_kind(&mut self) -> Result<StmtKind, LangError> {
        if self.is_kw("if") {
            self.bump();
            self.expect_sym("(")?;
            let cond = self.bool_expr()?;
            self.expect_sym(")")?;
            let then_branch = self.block()?;
            let else_branch = if self.is_kw("else") {
                self.bump();
                self.block()?
            } else {
                Vec::new()
            };
            return Ok(StmtKind::If { cond, then_branch, else_branch });
        }
        if self.is_kw("while") {
            self.bump();
            self.expect_sym("(")?;
            let cond = self.bool_expr()?;
            self.expect_sym(")")?;
            let body = self.block()?;
            return Ok(StmtKind::While { cond, body });
        }
        let kind = if self.is_kw("return") {
            self.bump();
            if self.is_sym(";") {
                StmtKind::Return(None)
            } else {
                StmtKind::Return(Some(self.operand()?))
            }
        } else if self.is_kw("goto") {
            self.bump();
            StmtKind::Goto(self.ident()?)
        } else if self.is_kw("free") {
            self.bump();
            self.expect_sym("(")?;
            let ptr = self.operand()?;
            self.expect_sym(")")?;
            StmtKind::Free { ptr }
        } else if self.is_kw("abort") {
            self.bump();
            self.expect_sym("(")?;
            self.expect_sym(")")?;
            StmtKind::Abort
        } else if self.is_kw("skip") {
            self.bump();
            StmtKind::Skip
        } else if self.is_sym("[") {
            self.bump();
            let ptr = self.operand()?;
            self.expect_sym("]")?;
            self.expect_sym(":=")?;
            let value = self.operand()?;
            StmtKind::Store { ptr, value }
        } else if matches!(self.peek_at(1), Tok::Sym(":")) {
            let l = self.ident()?;
            self.bump();
            return Ok(StmtKind::Label(l));
        } else if matches!(self.peek_at(1), Tok::Sym("(")) {
            let func = self.ident()?;
            let args = self.args()?;
            StmtKind::Call { target: None, func, args }
        } else {
            let target = self.ident()?;
            self.expect_sym(":=")?;
            if self.is_kw("malloc") {
                self.bump();
                self.expect_sym("(")?;
                self.expect_sym(")")?;
                StmtKind::Malloc { target }
            } else if self.is_sym("[") {
                self.bump();
                let ptr = self.operand()?;
                self.expect_sym("]")?;
                StmtKind::Load { target, ptr }
            } else if matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
                && matches!(self.peek_at(1), Tok::Sym("("))
            {
                let func = self.ident()?;
                let args = self.args()?;
                StmtKind::Call { target: Some(target), func, args }
            } else {
                StmtKind::Assign { target, value: self.operand()? }
            }
        };
        self.expect_sym(";")?;
        Ok(kind)
    }

    fn bool_expr(&mut self) -> Result<BoolExpr, LangError> {
        let mut lhs = self.and_expr()?;
        while self.is_sym("||") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = BoolExpr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<BoolExpr, LangError> {
        let mut lhs = self.unary()?;
        while self.is_sym("&&") {
            self.bump();
            let rhs = self.unary()?;
            lhs = BoolExpr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<BoolExpr, LangError> {
        if self.is_sym("!") {
            self.bump();
            return Ok(BoolExpr::not(self.unary()?));
        }
        if self.is_sym("(") {
            self.bump();
            let e = self.bool_expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(BoolExpr::True);
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(BoolExpr::False);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Tok::Sym("<") => RelOp::Lt,
            Tok::Sym("<=") => RelOp::Le,
            Tok::Sym("==") => RelOp::Eq,
            Tok::Sym("!=") => RelOp::Ne,
            Tok::Sym(">") => RelOp::Gt,
            Tok::Sym(">=") => RelOp::Ge,
            t => return self.err(format!("expected comparison operator, found {}", describe(t))),
        };
        self.bump();
        let rhs = self.operand()?;
        Ok(BoolExpr::Cmp(lhs, op, rhs))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parses and checks a program.
pub fn parse(src: &str) -> Result<Program, LangError> {
    parse_with_spans(src).map(|(p, _)| p)
}

/// Parses and checks a program, also returning the line/column of every statement.
pub fn parse_with_spans(src: &str) -> Result<(Program, SpanMap), LangError> {
    let toks = lex(src)?;
    let mut parser = Parser { toks, pos: 0, spans: Vec::new() };
    let fns = parser.program()?;
    let mut spans = SpanMap::new();
    let mut functions = Vec::new();
    for (f, fspans) in fns {
        for (ordinal, pos) in fspans.into_iter().enumerate() {
            spans.insert((f.name.clone(), ordinal), pos);
        }
        functions.push(f);
    }
    let mut program = Program { functions };
    check_program(&mut program)?;
    Ok((program, spans))
}

/// Validates program invariants and fills in variable kinds.
pub fn check_program(program: &mut Program) -> Result<(), LangError> {
    let mut names = BTreeSet::new();
    for f in &program.functions {
        if !names.insert(f.name.clone()) {
            return Err(LangError::semantic(&f.name, "duplicate function name"));
        }
    }
    // Callees must exist and the call graph must be acyclic.
    let mut callees: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for f in &program.functions {
        let mut cs = BTreeSet::new();
        let mut missing = None;
        f.visit(&mut |s| {
            if let StmtKind::Call { func, .. } = &s.kind {
                if !names.contains(func) {
                    missing.get_or_insert_with(|| func.clone());
                }
                cs.insert(func.clone());
            }
        });
        if let Some(m) = missing {
            return Err(LangError::semantic(&f.name, format!("call to undefined function `{m}`")));
        }
        callees.insert(f.name.clone(), cs);
    }
    fn cyclic(
        n: &str,
        g: &BTreeMap<String, BTreeSet<String>>,
        stack: &mut Vec<String>,
        done: &mut BTreeSet<String>,
    ) -> Option<String> {
        if done.contains(n) {
            return None;
        }
        if stack.iter().any(|s| s == n) {
            return Some(n.to_string());
        }
        stack.push(n.to_string());
        for c in &g[n] {
            if let Some(r) = cyclic(c, g, stack, done) {
                return Some(r);
            }
        }
        stack.pop();
        done.insert(n.to_string());
        None
    }
    let mut done = BTreeSet::new();
    for f in &program.functions {
        if let Some(r) = cyclic(&f.name, &callees, &mut Vec::new(), &mut done) {
            return Err(LangError::semantic(&r, "recursion is not supported"));
        }
    }

    let order = program.bottom_up_order();
    let mut signatures: BTreeMap<String, (Vec<VarKind>, Option<VarKind>)> = BTreeMap::new();
    for name in order {
        let idx = program.functions.iter().position(|f| f.name == name).unwrap();
        let f = &mut program.functions[idx];
        f.renumber();
        check_function(f, &signatures)?;
        signatures.insert(
            f.name.clone(),
            (f.params.iter().map(|p| p.kind).collect(), f.return_kind),
        );
    }
    Ok(())
}

struct Checker<'a> {
    func: String,
    kinds: BTreeMap<String, VarKind>,
    defined: BTreeSet<String>,
    labels: BTreeSet<String>,
    signatures: &'a BTreeMap<String, (Vec<VarKind>, Option<VarKind>)>,
    return_kind: Option<VarKind>,
}

impl Checker<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LangError> {
        Err(LangError::semantic(&self.func, msg))
    }

    fn use_operand(&self, op: &Operand) -> Result<Option<VarKind>, LangError> {
        match op {
            Operand::Var(v) => {
                if !self.defined.contains(v) {
                    return self.err(format!("variable `{v}` used before assignment"));
                }
                Ok(self.kinds.get(v).copied())
            }
            Operand::Null => Ok(Some(VarKind::Ptr)),
            Operand::Int(_) => Ok(Some(VarKind::Int)),
        }
    }

    fn use_ptr(&self, op: &Operand, what: &str) -> Result<(), LangError> {
        match self.use_operand(op)? {
            Some(VarKind::Ptr) => Ok(()),
            _ => self.err(format!("{what} requires a pointer operand")),
        }
    }

    fn define(&mut self, var: &str, kind: Option<VarKind>) -> Result<(), LangError> {
        if let Some(kind) = kind {
            match self.kinds.get(var) {
                Some(k) if *k != kind => {
                    return self.err(format!("variable `{var}` assigned both {k} and {kind} values"))
                }
                Some(_) => {}
                None => {
                    self.kinds.insert(var.to_string(), kind);
                }
            }
        }
        self.defined.insert(var.to_string());
        Ok(())
    }

    fn cond(&self, b: &BoolExpr) -> Result<(), LangError> {
        match b {
            BoolExpr::True | BoolExpr::False => Ok(()),
            BoolExpr::Not(e) => self.cond(e),
            BoolExpr::And(a, c) | BoolExpr::Or(a, c) => {
                self.cond(a)?;
                self.cond(c)
            }
            BoolExpr::Cmp(l, op, r) => {
                let (kl, kr) = (self.use_operand(l)?, self.use_operand(r)?);
                let is_ptr = kl == Some(VarKind::Ptr) || kr == Some(VarKind::Ptr);
                if is_ptr {
                    if kl != kr {
                        return self.err("comparison mixes pointer and integer operands");
                    }
                    if !op.is_pointer_op() {
                        return self.err(format!("operator `{}` is not defined on pointers", op.symbol()));
                    }
                } else if kl != Some(VarKind::Int) || kr != Some(VarKind::Int) {
                    return self.err("comparison of untyped operands");
                }
                Ok(())
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt], top_level: bool, in_loop: bool) -> Result<(), LangError> {
        for s in stmts {
            self.stmt(s, top_level, in_loop)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, top_level: bool, in_loop: bool) -> Result<(), LangError> {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let k = self.use_operand(value)?;
                self.define(target, k)
            }
            StmtKind::Load { target, ptr } => {
                self.use_ptr(ptr, "load")?;
                self.define(target, Some(VarKind::Ptr))
            }
            StmtKind::Store { ptr, value } => {
                self.use_ptr(ptr, "store")?;
                self.use_ptr(value, "stored value")
            }
            StmtKind::Malloc { target } => self.define(target, Some(VarKind::Ptr)),
            StmtKind::Free { ptr } => self.use_ptr(ptr, "free"),
            StmtKind::Call { target, func, args } => {
                let (params, ret) = self.signatures[func].clone();
                if params.len() != args.len() {
                    return self.err(format!(
                        "`{func}` expects {} arguments, got {}",
                        params.len(),
                        args.len()
                    ));
                }
                for (a, k) in args.iter().zip(params) {
                    if self.use_operand(a)? != Some(k) {
                        return self.err(format!("argument kind mismatch in call to `{func}`"));
                    }
                }
                if let Some(t) = target {
                    if ret.is_none() {
                        return self.err(format!("`{func}` returns no value"));
                    }
                    self.define(t, ret)?;
                }
                Ok(())
            }
            StmtKind::Abort | StmtKind::Skip => Ok(()),
            StmtKind::If { cond, then_branch, else_branch } => {
                self.cond(cond)?;
                self.block(then_branch, false, in_loop)?;
                self.block(else_branch, false, in_loop)
            }
            StmtKind::While { cond, body } => {
                self.cond(cond)?;
                self.block(body, false, true)
            }
            StmtKind::Return(v) => {
                if let Some(v) = v {
                    let k = self.use_operand(v)?;
                    if self.return_kind.is_none() {
                        self.return_kind = k;
                    }
                }
                Ok(())
            }
            StmtKind::Goto(l) => {
                if !self.labels.contains(l) {
                    return self.err(format!("undefined label `{l}`"));
                }
                if in_loop {
                    return self.err(format!("goto `{l}` inside a loop body"));
                }
                Ok(())
            }
            StmtKind::Label(l) => {
                if !top_level {
                    return self.err(format!("label `{l}` must appear at function top level"));
                }
                Ok(())
            }
        }
    }
}

fn check_function(
    f: &mut FunctionDef,
    signatures: &BTreeMap<String, (Vec<VarKind>, Option<VarKind>)>,
) -> Result<(), LangError> {
    let mut kinds = BTreeMap::new();
    let mut defined = BTreeSet::new();
    for p in &f.params {
        if kinds.insert(p.name.clone(), p.kind).is_some() {
            return Err(LangError::semantic(&f.name, format!("duplicate parameter `{}`", p.name)));
        }
        defined.insert(p.name.clone());
    }
    let mut labels = BTreeSet::new();
    let mut dup = None;
    f.visit(&mut |s| {
        if let StmtKind::Label(l) = &s.kind {
            if !labels.insert(l.clone()) {
                dup = Some(l.clone());
            }
        }
    });
    if let Some(l) = dup {
        return Err(LangError::semantic(&f.name, format!("duplicate label `{l}`")));
    }
    let mut checker = Checker {
        func: f.name.clone(),
        kinds,
        defined,
        labels,
        signatures,
        return_kind: None,
    };
    checker.block(&f.body, true, false)?;
    f.var_kinds = checker.kinds;
    f.return_kind = checker.return_kind;
    Ok(())
}
