//! Patch grammar with two learned weights per production.
//!
//! Each rule carries token counts for a path dimension and an effect
//! dimension. A rule's probability in a dimension is its tokens over the
//! total of its nonterminal; sampling draws by the product of the two.

use std::collections::BTreeMap;
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;

use crate::error::GrammarError;
use crate::lang::{BoolExpr, Location, Operand, Patch, RelOp, Stmt, StmtKind, VarKind};
use crate::localize::IngredientSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Nonterminal {
    Patch,
    HandlerSeq,
    HandlerCmd,
    Cond,
    PtrAtom,
    IntAtom,
    ConstAtom,
    IntConst,
    Label,
}

impl Nonterminal {
    pub const ALL: [Nonterminal; 9] = [
        Nonterminal::Patch,
        Nonterminal::HandlerSeq,
        Nonterminal::HandlerCmd,
        Nonterminal::Cond,
        Nonterminal::PtrAtom,
        Nonterminal::IntAtom,
        Nonterminal::ConstAtom,
        Nonterminal::IntConst,
        Nonterminal::Label,
    ];
}

impl fmt::Display for Nonterminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Production {
    Insert(Location),
    InsertIf(Location),
    Guard(Location),
    Single,
    Cons,
    ReturnPtr,
    ReturnInt,
    ReturnConst,
    ReturnVoid,
    Free,
    Goto,
    Malloc,
    Abort,
    True,
    False,
    PtrEq,
    PtrNe,
    PtrEqNull,
    PtrNeNull,
    IntCmp(RelOp),
    Not,
    And,
    Or,
    PtrVar(String),
    IntVar(String),
    Const(Operand),
    IntLit(i64),
    LabelName(String),
}

impl Production {
    pub fn children(&self) -> Vec<Nonterminal> {
        use Nonterminal as N;
        match self {
            Production::Insert(_) => vec![N::HandlerSeq],
            Production::InsertIf(_) => vec![N::Cond, N::HandlerSeq],
            Production::Guard(_) => vec![N::Cond],
            Production::Single => vec![N::HandlerCmd],
            Production::Cons => vec![N::HandlerCmd, N::HandlerSeq],
            Production::ReturnPtr | Production::Free | Production::Malloc => vec![N::PtrAtom],
            Production::ReturnInt => vec![N::IntAtom],
            Production::ReturnConst => vec![N::ConstAtom],
            Production::Goto => vec![N::Label],
            Production::PtrEq | Production::PtrNe => vec![N::PtrAtom, N::PtrAtom],
            Production::PtrEqNull | Production::PtrNeNull => vec![N::PtrAtom],
            Production::IntCmp(_) => vec![N::IntAtom, N::IntConst],
            Production::Not => vec![N::Cond],
            Production::And | Production::Or => vec![N::Cond, N::Cond],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Production::Insert(l) => write!(f, "INSERT(HandlerSeq, {l})"),
            Production::InsertIf(l) => write!(f, "INSERT(if (Cond) {{HandlerSeq}}, {l})"),
            Production::Guard(l) => write!(f, "GUARD(Cond, {l})"),
            Production::Single => f.write_str("HandlerCmd"),
            Production::Cons => f.write_str("HandlerCmd; HandlerSeq"),
            Production::ReturnPtr => f.write_str("return PtrAtom"),
            Production::ReturnInt => f.write_str("return IntAtom"),
            Production::ReturnConst => f.write_str("return ConstAtom"),
            Production::ReturnVoid => f.write_str("return"),
            Production::Free => f.write_str("free(PtrAtom)"),
            Production::Goto => f.write_str("goto Label"),
            Production::Malloc => f.write_str("PtrAtom := malloc()"),
            Production::Abort => f.write_str("abort()"),
            Production::True => f.write_str("true"),
            Production::False => f.write_str("false"),
            Production::PtrEq => f.write_str("PtrAtom == PtrAtom"),
            Production::PtrNe => f.write_str("PtrAtom != PtrAtom"),
            Production::PtrEqNull => f.write_str("PtrAtom == NULL"),
            Production::PtrNeNull => f.write_str("PtrAtom != NULL"),
            Production::IntCmp(op) => write!(f, "IntAtom {} IntConst", op.symbol()),
            Production::Not => f.write_str("!Cond"),
            Production::And => f.write_str("Cond && Cond"),
            Production::Or => f.write_str("Cond || Cond"),
            Production::PtrVar(v) | Production::IntVar(v) | Production::LabelName(v) => f.write_str(v),
            Production::Const(o) => f.write_str(&crate::lang::operand(o)),
            Production::IntLit(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: usize,
    pub lhs: Nonterminal,
    pub prod: Production,
    pub weight_pi: u64,
    pub weight_e: u64,
    /// Height of the smallest complete derivation starting with this rule.
    pub min_height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGrammar {
    pub rules: Vec<Rule>,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub patch: Patch,
    pub rules_used: Vec<usize>,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Pi,
    E,
}

struct Node {
    rule: usize,
    kids: Vec<Node>,
}

impl WeightedGrammar {
    pub fn rules_of(&self, nt: Nonterminal) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.lhs == nt)
    }

    pub fn rule(&self, id: usize) -> Result<&Rule, GrammarError> {
        self.rules.get(id).ok_or(GrammarError::UnknownRule(id))
    }

    /// Normalized probability of a rule within its nonterminal.
    pub fn prob(&self, id: usize, dim: Dim) -> f64 {
        let r = &self.rules[id];
        let w = |r: &Rule| match dim {
            Dim::Pi => r.weight_pi,
            Dim::E => r.weight_e,
        } as f64;
        let total: f64 = self.rules_of(r.lhs).map(w).sum();
        w(r) / total
    }

    /// Per-nonterminal `(rule id, p_pi, p_e)` triples.
    pub fn probabilities(&self) -> BTreeMap<Nonterminal, Vec<(usize, f64, f64)>> {
        let mut out: BTreeMap<Nonterminal, Vec<(usize, f64, f64)>> = BTreeMap::new();
        for r in &self.rules {
            out.entry(r.lhs).or_default().push((r.id, self.prob(r.id, Dim::Pi), self.prob(r.id, Dim::E)));
        }
        out
    }

    fn nt_min_height(&self, nt: Nonterminal) -> Option<usize> {
        self.rules_of(nt).map(|r| r.min_height).min()
    }

    fn candidates(&self, nt: Nonterminal, depth: usize) -> Vec<&Rule> {
        let fit: Vec<&Rule> = self.rules_of(nt).filter(|r| depth + r.min_height <= self.height).collect();
        if !fit.is_empty() {
            return fit;
        }
        let least = self.nt_min_height(nt).unwrap_or(0);
        self.rules_of(nt).filter(|r| r.min_height == least).collect()
    }

    fn derive(
        &self,
        nt: Nonterminal,
        depth: usize,
        choose: &mut dyn FnMut(Nonterminal, usize) -> Result<usize, GrammarError>,
        used: &mut Vec<usize>,
        height: &mut usize,
    ) -> Result<Node, GrammarError> {
        let id = choose(nt, depth)?;
        let rule = self.rule(id)?;
        if rule.lhs != nt {
            return Err(GrammarError::Replay(format!("rule {id} does not expand {nt}")));
        }
        used.push(id);
        *height = (*height).max(depth);
        let mut kids = Vec::new();
        for child in rule.prod.children() {
            kids.push(self.derive(child, depth + 1, choose, used, height)?);
        }
        Ok(Node { rule: id, kids })
    }

    fn finish(&self, root: Node, used: Vec<usize>, height: usize) -> Derivation {
        let mut patch = self.build_patch(&root);
        patch.derivation = used.clone();
        Derivation { patch, rules_used: used, height }
    }

    /// Top-down leftmost derivation drawing rules by `p_pi * p_e`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Derivation, GrammarError> {
        if self.rules_of(Nonterminal::Patch).next().is_none() {
            return Err(GrammarError::Empty);
        }
        let mut choose = |nt: Nonterminal, depth: usize| -> Result<usize, GrammarError> {
            let cands = self.candidates(nt, depth);
            let weights: Vec<f64> = cands.iter().map(|r| self.prob(r.id, Dim::Pi) * self.prob(r.id, Dim::E)).collect();
            let dist = WeightedIndex::new(&weights).map_err(|_| GrammarError::Empty)?;
            Ok(cands[dist.sample(rng)].id)
        };
        let (mut used, mut height) = (Vec::new(), 0);
        let root = self.derive(Nonterminal::Patch, 0, &mut choose, &mut used, &mut height)?;
        Ok(self.finish(root, used, height))
    }

    /// Rebuilds the derivation for a recorded rule sequence.
    pub fn replay(&self, rules: &[usize]) -> Result<Derivation, GrammarError> {
        let mut it = rules.iter().copied();
        let mut choose = |nt: Nonterminal, _| it.next().ok_or_else(|| GrammarError::Replay(format!("ran out of rules at {nt}")));
        let (mut used, mut height) = (Vec::new(), 0);
        let root = self.derive(Nonterminal::Patch, 0, &mut choose, &mut used, &mut height)?;
        if used.len() != rules.len() {
            return Err(GrammarError::Replay("trailing rules".into()));
        }
        Ok(self.finish(root, used, height))
    }

    /// Adds tokens to every rule occurrence of the derivation.
    pub fn reward(&mut self, rules_used: &[usize], tokens_pi: u64, tokens_e: u64) -> Result<(), GrammarError> {
        for id in rules_used {
            self.rule(*id)?;
        }
        for id in rules_used {
            let r = &mut self.rules[*id];
            r.weight_pi += tokens_pi;
            r.weight_e += tokens_e;
        }
        Ok(())
    }

    pub fn rule_text(&self, id: usize) -> String {
        let r = &self.rules[id];
        format!("{} -> {}", r.lhs, r.prod)
    }

    fn prod(&self, n: &Node) -> &Production {
        &self.rules[n.rule].prod
    }

    fn build_patch(&self, n: &Node) -> Patch {
        match self.prod(n) {
            Production::Insert(loc) => Patch::insert(self.build_seq(&n.kids[0]), loc.clone()),
            Production::InsertIf(loc) => Patch::insert(
                vec![Stmt::new(StmtKind::If {
                    cond: self.build_cond(&n.kids[0]),
                    then_branch: self.build_seq(&n.kids[1]),
                    else_branch: Vec::new(),
                })],
                loc.clone(),
            ),
            Production::Guard(loc) => Patch::guard(self.build_cond(&n.kids[0]), loc.clone()),
            p => unreachable!("not a patch rule: {p}"),
        }
    }

    fn build_seq(&self, n: &Node) -> Vec<Stmt> {
        let mut out = vec![self.build_cmd(&n.kids[0])];
        if let Production::Cons = self.prod(n) {
            out.extend(self.build_seq(&n.kids[1]));
        }
        out
    }

    fn build_cmd(&self, n: &Node) -> Stmt {
        let kind = match self.prod(n) {
            Production::ReturnPtr | Production::ReturnInt | Production::ReturnConst => {
                StmtKind::Return(Some(self.atom(&n.kids[0])))
            }
            Production::ReturnVoid => StmtKind::Return(None),
            Production::Free => StmtKind::Free { ptr: self.atom(&n.kids[0]) },
            Production::Goto => StmtKind::Goto(self.atom_name(&n.kids[0])),
            Production::Malloc => StmtKind::Malloc { target: self.atom_name(&n.kids[0]) },
            Production::Abort => StmtKind::Abort,
            p => unreachable!("not a command rule: {p}"),
        };
        Stmt::new(kind)
    }

    fn build_cond(&self, n: &Node) -> BoolExpr {
        let k = |i: usize| &n.kids[i];
        match self.prod(n) {
            Production::True => BoolExpr::True,
            Production::False => BoolExpr::False,
            Production::PtrEq => BoolExpr::cmp(self.atom(k(0)), RelOp::Eq, self.atom(k(1))),
            Production::PtrNe => BoolExpr::cmp(self.atom(k(0)), RelOp::Ne, self.atom(k(1))),
            Production::PtrEqNull => BoolExpr::cmp(self.atom(k(0)), RelOp::Eq, Operand::Null),
            Production::PtrNeNull => BoolExpr::cmp(self.atom(k(0)), RelOp::Ne, Operand::Null),
            Production::IntCmp(op) => BoolExpr::cmp(self.atom(k(0)), *op, self.atom(k(1))),
            Production::Not => BoolExpr::not(self.build_cond(k(0))),
            Production::And => BoolExpr::and(self.build_cond(k(0)), self.build_cond(k(1))),
            Production::Or => BoolExpr::or(self.build_cond(k(0)), self.build_cond(k(1))),
            p => unreachable!("not a condition rule: {p}"),
        }
    }

    fn atom(&self, n: &Node) -> Operand {
        match self.prod(n) {
            Production::PtrVar(v) | Production::IntVar(v) => Operand::var(v),
            Production::Const(o) => o.clone(),
            Production::IntLit(i) => Operand::Int(*i),
            p => unreachable!("not an operand rule: {p}"),
        }
    }

    fn atom_name(&self, n: &Node) -> String {
        match self.prod(n) {
            Production::PtrVar(v) | Production::LabelName(v) => v.clone(),
            p => unreachable!("not a name rule: {p}"),
        }
    }
}

/// Grammar over the given fix locations, all weights at one token.
pub fn build_grammar(ing: &IngredientSet, locs: &[Location], height: usize) -> Result<WeightedGrammar, GrammarError> {
    use Nonterminal as N;
    let mut prods: Vec<(Nonterminal, Production)> = Vec::new();
    for loc in locs {
        prods.push((N::Patch, Production::Insert(loc.clone())));
        prods.push((N::Patch, Production::InsertIf(loc.clone())));
        prods.push((N::Patch, Production::Guard(loc.clone())));
    }
    prods.push((N::HandlerSeq, Production::Single));
    prods.push((N::HandlerSeq, Production::Cons));
    match ing.return_kind {
        Some(VarKind::Ptr) => {
            prods.push((N::HandlerCmd, Production::ReturnPtr));
            prods.push((N::HandlerCmd, Production::ReturnConst));
            prods.push((N::ConstAtom, Production::Const(Operand::Null)));
        }
        Some(VarKind::Int) => {
            prods.push((N::HandlerCmd, Production::ReturnInt));
            prods.push((N::HandlerCmd, Production::ReturnConst));
            for c in &ing.int_consts {
                prods.push((N::ConstAtom, Production::Const(Operand::Int(*c))));
            }
        }
        None => prods.push((N::HandlerCmd, Production::ReturnVoid)),
    }
    for p in [Production::Free, Production::Goto, Production::Malloc, Production::Abort] {
        prods.push((N::HandlerCmd, p));
    }
    for p in [
        Production::True,
        Production::False,
        Production::PtrEq,
        Production::PtrNe,
        Production::PtrEqNull,
        Production::PtrNeNull,
    ] {
        prods.push((N::Cond, p));
    }
    for op in RelOp::ALL {
        prods.push((N::Cond, Production::IntCmp(op)));
    }
    for p in [Production::Not, Production::And, Production::Or] {
        prods.push((N::Cond, p));
    }
    prods.extend(ing.ptr_vars.iter().map(|v| (N::PtrAtom, Production::PtrVar(v.clone()))));
    prods.extend(ing.nonptr_vars.iter().map(|v| (N::IntAtom, Production::IntVar(v.clone()))));
    prods.extend(ing.int_consts.iter().map(|c| (N::IntConst, Production::IntLit(*c))));
    prods.extend(ing.labels.iter().map(|l| (N::Label, Production::LabelName(l.clone()))));

    // least-height fixpoint; rules never reaching a value are unproductive
    let mut nt_height: BTreeMap<Nonterminal, usize> = BTreeMap::new();
    let rule_height = |p: &Production, nt_height: &BTreeMap<Nonterminal, usize>| -> Option<usize> {
        let kids = p.children();
        if kids.is_empty() {
            return Some(0);
        }
        let mut m = 0;
        for k in kids {
            m = m.max(*nt_height.get(&k)?);
        }
        Some(m + 1)
    };
    loop {
        let mut changed = false;
        for (nt, p) in &prods {
            if let Some(h) = rule_height(p, &nt_height) {
                let cur = nt_height.get(nt).copied();
                if cur.is_none_or(|c| h < c) {
                    nt_height.insert(*nt, h);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut rules = Vec::new();
    for (nt, p) in prods {
        if let Some(h) = rule_height(&p, &nt_height) {
            rules.push(Rule { id: rules.len(), lhs: nt, prod: p, weight_pi: 1, weight_e: 1, min_height: h });
        }
    }
    let g = WeightedGrammar { rules, height };
    match g.nt_min_height(N::Patch) {
        Some(h) if h <= height => Ok(g),
        _ => Err(GrammarError::Empty),
    }
}
