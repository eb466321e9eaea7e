//! Decision procedures for pure path formulas.
//!
//! Formulas are conjunctions of literals over pointer terms (symbols and
//! `nil`) and integer terms (symbols and constants). Pointer literals are
//! decided by congruence closure (union-find plus disequality edges);
//! integer literals by a closed difference-bound matrix, with integer
//! disequalities handled by case splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::RelOp;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PtrTerm {
    Nil,
    Sym(String),
}

impl PtrTerm {
    pub fn sym(s: &str) -> Self {
        PtrTerm::Sym(s.to_string())
    }

    pub fn name(&self) -> &str {
        match self {
            PtrTerm::Nil => "nil",
            PtrTerm::Sym(s) => s,
        }
    }
}

impl fmt::Display for PtrTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntTerm {
    Const(i64),
    Sym(String),
}

impl IntTerm {
    pub fn sym(s: &str) -> Self {
        IntTerm::Sym(s.to_string())
    }
}

impl fmt::Display for IntTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntTerm::Const(c) => write!(f, "{c}"),
            IntTerm::Sym(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Literal {
    PtrEq(PtrTerm, PtrTerm),
    PtrNe(PtrTerm, PtrTerm),
    IntRel(IntTerm, RelOp, IntTerm),
}

impl Literal {
    pub fn ptr_eq(a: PtrTerm, b: PtrTerm) -> Self {
        if a <= b {
            Literal::PtrEq(a, b)
        } else {
            Literal::PtrEq(b, a)
        }
    }

    pub fn ptr_ne(a: PtrTerm, b: PtrTerm) -> Self {
        if a <= b {
            Literal::PtrNe(a, b)
        } else {
            Literal::PtrNe(b, a)
        }
    }

    pub fn negate(&self) -> Literal {
        match self {
            Literal::PtrEq(a, b) => Literal::PtrNe(a.clone(), b.clone()),
            Literal::PtrNe(a, b) => Literal::PtrEq(a.clone(), b.clone()),
            Literal::IntRel(a, op, b) => Literal::IntRel(a.clone(), op.negate(), b.clone()),
        }
    }

    /// `Some(v)` when the literal's truth does not depend on any symbol.
    pub fn trivial_value(&self) -> Option<bool> {
        match self {
            Literal::PtrEq(a, b) if a == b => Some(true),
            Literal::PtrNe(a, b) if a == b => Some(false),
            Literal::IntRel(IntTerm::Const(a), op, IntTerm::Const(b)) => Some(op.eval(*a, *b)),
            Literal::IntRel(a, op, b) if a == b => Some(op.eval(0, 0)),
            _ => None,
        }
    }

    pub fn ptr_symbols(&self) -> Vec<&str> {
        match self {
            Literal::PtrEq(a, b) | Literal::PtrNe(a, b) => [a, b]
                .into_iter()
                .filter_map(|t| match t {
                    PtrTerm::Sym(s) => Some(s.as_str()),
                    PtrTerm::Nil => None,
                })
                .collect(),
            Literal::IntRel(..) => Vec::new(),
        }
    }

    pub fn int_symbols(&self) -> Vec<&str> {
        match self {
            Literal::IntRel(a, _, b) => [a, b]
                .into_iter()
                .filter_map(|t| match t {
                    IntTerm::Sym(s) => Some(s.as_str()),
                    IntTerm::Const(_) => None,
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn mentions(&self, sym: &str) -> bool {
        self.ptr_symbols().contains(&sym) || self.int_symbols().contains(&sym)
    }

    fn substitute(&self, from: &str, to_ptr: Option<&PtrTerm>, to_int: Option<&IntTerm>) -> Literal {
        let p = |t: &PtrTerm| match (t, to_ptr) {
            (PtrTerm::Sym(s), Some(r)) if s == from => r.clone(),
            _ => t.clone(),
        };
        let i = |t: &IntTerm| match (t, to_int) {
            (IntTerm::Sym(s), Some(r)) if s == from => r.clone(),
            _ => t.clone(),
        };
        match self {
            Literal::PtrEq(a, b) => Literal::ptr_eq(p(a), p(b)),
            Literal::PtrNe(a, b) => Literal::ptr_ne(p(a), p(b)),
            Literal::IntRel(a, op, b) => Literal::IntRel(i(a), *op, i(b)),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::PtrEq(a, b) => write!(f, "{a} = {b}"),
            Literal::PtrNe(a, b) => write!(f, "{a} != {b}"),
            Literal::IntRel(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
        }
    }
}

/// A conjunction of literals.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PureFormula {
    pub lits: Vec<Literal>,
}

impl PureFormula {
    pub fn tt() -> Self {
        PureFormula::default()
    }

    pub fn from_lits(lits: impl IntoIterator<Item = Literal>) -> Self {
        let mut f = PureFormula::tt();
        for l in lits {
            f.push(l);
        }
        f
    }

    /// Adds a literal, skipping tautologies and duplicates.
    pub fn push(&mut self, lit: Literal) {
        if lit.trivial_value() == Some(true) || self.lits.contains(&lit) {
            return;
        }
        self.lits.push(lit);
    }

    pub fn and(&self, other: &PureFormula) -> PureFormula {
        let mut f = self.clone();
        for l in &other.lits {
            f.push(l.clone());
        }
        f
    }

    pub fn with(&self, lit: Literal) -> PureFormula {
        let mut f = self.clone();
        f.push(lit);
        f
    }

    pub fn symbols(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        for l in &self.lits {
            s.extend(l.ptr_symbols().into_iter().map(String::from));
            s.extend(l.int_symbols().into_iter().map(String::from));
        }
        s
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }
}

impl fmt::Display for PureFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lits.is_empty() {
            return f.write_str("true");
        }
        let parts: Vec<String> = self.lits.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(" && "))
    }
}

// ---------------------------------------------------------------------------
// Pointer part: union-find with disequalities.

#[derive(Debug, Clone, Default)]
struct UnionFind {
    parent: BTreeMap<PtrTerm, PtrTerm>,
}

impl UnionFind {
    fn find(&mut self, t: &PtrTerm) -> PtrTerm {
        let p = match self.parent.get(t) {
            None => {
                self.parent.insert(t.clone(), t.clone());
                return t.clone();
            }
            Some(p) if p == t => return t.clone(),
            Some(p) => p.clone(),
        };
        let root = self.find(&p);
        self.parent.insert(t.clone(), root.clone());
        root
    }

    fn union(&mut self, a: &PtrTerm, b: &PtrTerm) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        // nil is always the representative of its class; otherwise the smaller term.
        let (root, child) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent.insert(child, root);
    }
}

// ---------------------------------------------------------------------------
// Integer part: difference-bound matrix over symbols plus a zero node.

const INF: i64 = i64::MAX / 4;

#[derive(Debug, Clone)]
struct Dbm {
    names: Vec<String>, // index 0 is the zero node
    m: Vec<Vec<i64>>,   // m[i][j] bounds x_i - x_j from above
    diseqs: Vec<(usize, usize, i64)>, // x_i - x_j != k
}

impl Dbm {
    fn new(names: Vec<String>) -> Self {
        let n = names.len();
        let mut m = vec![vec![INF; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0;
        }
        Dbm { names, m, diseqs: Vec::new() }
    }

    fn index(&self, t: &IntTerm) -> (usize, i64) {
        match t {
            IntTerm::Const(c) => (0, *c),
            IntTerm::Sym(s) => (self.names.iter().position(|n| n == s).unwrap(), 0),
        }
    }

    fn bound(&mut self, i: usize, j: usize, k: i64) {
        if k < self.m[i][j] {
            self.m[i][j] = k;
        }
    }

    /// Returns false when the literal is trivially unsatisfiable.
    fn add(&mut self, a: &IntTerm, op: RelOp, b: &IntTerm) -> bool {
        let (i, oa) = self.index(a);
        let (j, ob) = self.index(b);
        // x_i + oa  op  x_j + ob   <=>   x_i - x_j  op  k
        let k = ob - oa;
        if i == j {
            return op.eval(0, k);
        }
        match op {
            RelOp::Le => self.bound(i, j, k),
            RelOp::Lt => self.bound(i, j, k - 1),
            RelOp::Ge => self.bound(j, i, -k),
            RelOp::Gt => self.bound(j, i, -k - 1),
            RelOp::Eq => {
                self.bound(i, j, k);
                self.bound(j, i, -k);
            }
            RelOp::Ne => self.diseqs.push((i, j, k)),
        }
        true
    }

    /// Floyd-Warshall closure; false if a negative cycle exists.
    fn close(&mut self) -> bool {
        let n = self.names.len();
        for k in 0..n {
            for i in 0..n {
                if self.m[i][k] >= INF {
                    continue;
                }
                for j in 0..n {
                    if self.m[k][j] >= INF {
                        continue;
                    }
                    let via = self.m[i][k] + self.m[k][j];
                    if via < self.m[i][j] {
                        self.m[i][j] = via;
                    }
                }
            }
        }
        (0..n).all(|i| self.m[i][i] >= 0)
    }

    fn range(&self, i: usize, j: usize) -> (i64, i64) {
        let hi = self.m[i][j];
        let lo = if self.m[j][i] >= INF { -INF } else { -self.m[j][i] };
        (lo, hi)
    }

    fn sat(&self) -> bool {
        let mut d = self.clone();
        if !d.close() {
            return false;
        }
        let pending: Vec<_> = d.diseqs.clone();
        for (idx, &(i, j, k)) in pending.iter().enumerate() {
            let (lo, hi) = d.range(i, j);
            if k < lo || k > hi {
                continue;
            }
            if lo == hi {
                return false;
            }
            let mut rest = d.clone();
            rest.diseqs = pending[idx + 1..].to_vec();
            let mut below = rest.clone();
            below.bound(i, j, k - 1);
            if below.sat() {
                return true;
            }
            let mut above = rest;
            above.bound(j, i, -k - 1);
            return above.sat();
        }
        true
    }

    /// Moves disequalities sitting on a bound into the bound; drops entailed ones.
    fn absorb(&mut self) {
        loop {
            let mut changed = false;
            for &(i, j, k) in &self.diseqs.clone() {
                let (lo, hi) = self.range(i, j);
                if hi == k {
                    self.bound(i, j, k - 1);
                    changed = true;
                } else if lo == k {
                    self.bound(j, i, -k - 1);
                    changed = true;
                }
                if changed {
                    self.close();
                    break;
                }
            }
            if !changed {
                break;
            }
        }
        let live: Vec<_> = self
            .diseqs
            .iter()
            .copied()
            .filter(|&(i, j, k)| {
                let (lo, hi) = self.range(i, j);
                lo <= k && k <= hi
            })
            .map(|(i, j, k)| if self.names[i] <= self.names[j] { (i, j, k) } else { (j, i, -k) })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        self.diseqs = live;
    }
}

// ---------------------------------------------------------------------------

/// Canonical normal form of a satisfiable formula: equivalent formulas
/// produce equal values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonPure {
    pub sat: bool,
    pub ptr_classes: Vec<Vec<String>>,
    pub ptr_diseqs: Vec<(String, String)>,
    pub int_bounds: Vec<(String, String, i64)>,
    pub int_diseqs: Vec<(String, String, i64)>,
}

impl fmt::Display for CanonPure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.sat {
            return f.write_str("false");
        }
        let mut parts = Vec::new();
        for c in &self.ptr_classes {
            parts.push(c.join(" = "));
        }
        for (a, b) in &self.ptr_diseqs {
            parts.push(format!("{a} != {b}"));
        }
        for (a, b, k) in &self.int_bounds {
            parts.push(format!("{a} - {b} <= {k}"));
        }
        for (a, b, k) in &self.int_diseqs {
            parts.push(format!("{a} - {b} != {k}"));
        }
        if parts.is_empty() {
            f.write_str("true")
        } else {
            f.write_str(&parts.join(" && "))
        }
    }
}

/// Closure of a formula: alias classes plus integer bounds.
#[derive(Debug, Clone)]
pub struct Closure {
    uf: UnionFind,
    ptr_diseqs: Vec<(PtrTerm, PtrTerm)>,
    dbm: Dbm,
    sat: bool,
}

impl Closure {
    pub fn new(f: &PureFormula) -> Self {
        let mut uf = UnionFind::default();
        let mut ptr_diseqs = Vec::new();
        let mut int_syms = BTreeSet::new();
        let mut trivially_false = false;
        for l in &f.lits {
            if l.trivial_value() == Some(false) {
                trivially_false = true;
            }
            match l {
                Literal::PtrEq(a, b) => uf.union(a, b),
                Literal::PtrNe(a, b) => {
                    uf.find(a);
                    uf.find(b);
                    ptr_diseqs.push((a.clone(), b.clone()));
                }
                Literal::IntRel(..) => int_syms.extend(l.int_symbols().into_iter().map(String::from)),
            }
        }
        uf.find(&PtrTerm::Nil);
        let mut names = vec!["0".to_string()];
        names.extend(int_syms);
        let mut dbm = Dbm::new(names);
        for l in &f.lits {
            if let Literal::IntRel(a, op, b) = l {
                if !dbm.add(a, *op, b) {
                    trivially_false = true;
                }
            }
        }
        let ptr_ok = ptr_diseqs.iter().all(|(a, b)| uf.find(a) != uf.find(b));
        let sat = !trivially_false && ptr_ok && dbm.sat();
        if sat {
            dbm.close();
            dbm.absorb();
        }
        Closure { uf, ptr_diseqs, dbm, sat }
    }

    pub fn is_sat(&self) -> bool {
        self.sat
    }

    /// Representative of the alias class of `t` (nil if the class contains nil).
    pub fn ptr_rep(&self, t: &PtrTerm) -> PtrTerm {
        let mut uf = self.uf.clone();
        uf.find(t)
    }

    pub fn same_ptr(&self, a: &PtrTerm, b: &PtrTerm) -> bool {
        self.ptr_rep(a) == self.ptr_rep(b)
    }

    /// A constant if the term is pinned, else the least symbol it equals.
    pub fn int_rep(&self, t: &IntTerm) -> IntTerm {
        let IntTerm::Sym(s) = t else { return t.clone() };
        let Some(i) = self.dbm.names.iter().position(|n| n == s) else { return t.clone() };
        let (lo, hi) = self.dbm.range(i, 0);
        if lo == hi {
            return IntTerm::Const(lo);
        }
        let best = (1..self.dbm.names.len())
            .filter(|&j| self.dbm.m[i][j] == 0 && self.dbm.m[j][i] == 0)
            .map(|j| self.dbm.names[j].clone())
            .min()
            .unwrap_or_else(|| s.clone());
        IntTerm::Sym(best)
    }

    /// Alias classes with at least two members, each sorted, nil first.
    pub fn ptr_classes(&self) -> Vec<Vec<String>> {
        let mut uf = self.uf.clone();
        let terms: Vec<PtrTerm> = uf.parent.keys().cloned().collect();
        let mut classes: BTreeMap<PtrTerm, Vec<PtrTerm>> = BTreeMap::new();
        for t in terms {
            let r = uf.find(&t);
            classes.entry(r).or_default().push(t);
        }
        let mut out: Vec<Vec<String>> = classes
            .into_values()
            .filter(|c| c.len() > 1)
            .map(|mut c| {
                c.sort();
                c.iter().map(|t| t.name().to_string()).collect()
            })
            .collect();
        out.sort();
        out
    }

    pub fn canonical(&self) -> CanonPure {
        if !self.sat {
            return CanonPure {
                sat: false,
                ptr_classes: Vec::new(),
                ptr_diseqs: Vec::new(),
                int_bounds: Vec::new(),
                int_diseqs: Vec::new(),
            };
        }
        let mut ptr_diseqs: Vec<(String, String)> = self
            .ptr_diseqs
            .iter()
            .map(|(a, b)| {
                let (ra, rb) = (self.ptr_rep(a), self.ptr_rep(b));
                let (x, y) = if ra <= rb { (ra, rb) } else { (rb, ra) };
                (x.name().to_string(), y.name().to_string())
            })
            .collect();
        ptr_diseqs.sort();
        ptr_diseqs.dedup();
        let d = &self.dbm;
        let n = d.names.len();
        let mut int_bounds = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && d.m[i][j] < INF {
                    int_bounds.push((d.names[i].clone(), d.names[j].clone(), d.m[i][j]));
                }
            }
        }
        int_bounds.sort();
        let mut int_diseqs: Vec<_> = d
            .diseqs
            .iter()
            .map(|&(i, j, k)| (d.names[i].clone(), d.names[j].clone(), k))
            .collect();
        int_diseqs.sort();
        int_diseqs.dedup();
        CanonPure { sat: true, ptr_classes: self.ptr_classes(), ptr_diseqs, int_bounds, int_diseqs }
    }
}

pub fn sat(f: &PureFormula) -> bool {
    Closure::new(f).is_sat()
}

/// Every literal of `g` is entailed by `f` (decided by refutation).
pub fn implies(f: &PureFormula, g: &PureFormula) -> bool {
    if !sat(f) {
        return true;
    }
    g.lits.iter().all(|l| !sat(&f.with(l.negate())))
}

pub fn implies_lit(f: &PureFormula, l: &Literal) -> bool {
    !sat(&f.with(l.negate()))
}

pub fn equivalent(f: &PureFormula, g: &PureFormula) -> bool {
    implies(f, g) && implies(g, f)
}

pub fn canonical(f: &PureFormula) -> CanonPure {
    Closure::new(f).canonical()
}

/// Result of existential elimination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eliminated {
    pub formula: PureFormula,
    /// Some variable had no equality binding and its literals were dropped.
    pub weakened: bool,
}

/// Eliminates the existential symbols `xs`: substitution where an equality
/// binds a symbol to an outside term, otherwise dropping its literals.
pub fn eliminate(f: &PureFormula, xs: &BTreeSet<String>) -> Eliminated {
    let mut cur = f.clone();
    let mut weakened = false;
    for x in xs {
        if !cur.lits.iter().any(|l| l.mentions(x)) {
            continue;
        }
        let closure = Closure::new(&cur);
        let xp = PtrTerm::Sym(x.clone());
        let ptr_binding = {
            let mut uf = closure.uf.clone();
            let rx = uf.find(&xp);
            let mut members: Vec<PtrTerm> = uf
                .parent
                .keys()
                .cloned()
                .collect::<Vec<_>>()
                .into_iter()
                .filter(|t| {
                    let keep = match t {
                        PtrTerm::Sym(s) => !xs.contains(s),
                        PtrTerm::Nil => true,
                    };
                    keep && uf.clone().find(t) == rx
                })
                .collect();
            members.sort();
            let mentioned = cur.lits.iter().any(|l| l.ptr_symbols().contains(&x.as_str()));
            if mentioned {
                members.into_iter().next()
            } else {
                None
            }
        };
        let int_binding = cur.lits.iter().find_map(|l| match l {
            Literal::IntRel(IntTerm::Sym(a), RelOp::Eq, b) if a == x && !int_in(b, xs) => Some(b.clone()),
            Literal::IntRel(b, RelOp::Eq, IntTerm::Sym(a)) if a == x && !int_in(b, xs) => Some(b.clone()),
            _ => None,
        });
        let mut next = PureFormula::tt();
        let mut dropped = false;
        for l in &cur.lits {
            let is_ptr = !l.ptr_symbols().is_empty() || matches!(l, Literal::PtrEq(..) | Literal::PtrNe(..));
            let sub = if is_ptr {
                ptr_binding.as_ref().map(|t| l.substitute(x, Some(t), None))
            } else {
                int_binding.as_ref().map(|t| l.substitute(x, None, Some(t)))
            };
            match sub {
                Some(s) if l.mentions(x) => next.push(s),
                _ if l.mentions(x) => dropped = true,
                _ => next.push(l.clone()),
            }
        }
        weakened |= dropped;
        cur = next;
    }
    Eliminated { formula: cur, weakened }
}

fn int_in(t: &IntTerm, xs: &BTreeSet<String>) -> bool {
    matches!(t, IntTerm::Sym(s) if xs.contains(s))
}
