//! Exhaustive-valuation oracle for pure formulas.
//!
//! Pointer symbols range over nil plus one distinct location per symbol.
//! Integer symbols range over the constants widened by the number of integer
//! symbols, which suffices for difference constraints with integer steps.

use std::collections::BTreeMap;

use heapfix_core::solver::{IntTerm, Literal, PtrTerm, PureFormula};
use heapfix_core::lang::RelOp;
use rand::Rng;

#[derive(Debug, Clone, Default)]
struct Valuation {
    ptrs: BTreeMap<String, usize>,
    ints: BTreeMap<String, i64>,
}

impl Valuation {
    fn ptr(&self, t: &PtrTerm) -> usize {
        match t {
            PtrTerm::Nil => 0,
            PtrTerm::Sym(s) => self.ptrs[s],
        }
    }

    fn int(&self, t: &IntTerm) -> i64 {
        match t {
            IntTerm::Const(k) => *k,
            IntTerm::Sym(s) => self.ints[s],
        }
    }

    fn holds(&self, l: &Literal) -> bool {
        match l {
            Literal::PtrEq(a, b) => self.ptr(a) == self.ptr(b),
            Literal::PtrNe(a, b) => self.ptr(a) != self.ptr(b),
            Literal::IntRel(a, op, b) => op.eval(self.int(a), self.int(b)),
        }
    }

    fn satisfies(&self, f: &PureFormula) -> bool {
        f.lits.iter().all(|l| self.holds(l))
    }
}

fn valuations(fs: &[&PureFormula]) -> Vec<Valuation> {
    let mut ptrs = Vec::new();
    let mut ints = Vec::new();
    let mut consts = vec![0i64];
    for f in fs {
        for l in &f.lits {
            ptrs.extend(l.ptr_symbols().into_iter().map(String::from));
            ints.extend(l.int_symbols().into_iter().map(String::from));
            if let Literal::IntRel(a, _, b) = l {
                for t in [a, b] {
                    if let IntTerm::Const(k) = t {
                        consts.push(*k);
                    }
                }
            }
        }
    }
    ptrs.sort();
    ptrs.dedup();
    ints.sort();
    ints.dedup();
    let n = ints.len() as i64 + 1;
    let lo = consts.iter().min().unwrap() - n;
    let hi = consts.iter().max().unwrap() + n;
    let mut out = vec![Valuation::default()];
    for p in &ptrs {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=ptrs.len()).map(move |loc| {
                    let mut w = v.clone();
                    w.ptrs.insert(p.clone(), loc);
                    w
                })
            })
            .collect();
    }
    for i in &ints {
        out = out
            .into_iter()
            .flat_map(|v| {
                (lo..=hi).map(move |k| {
                    let mut w = v.clone();
                    w.ints.insert(i.clone(), k);
                    w
                })
            })
            .collect();
    }
    out
}

pub fn sat(f: &PureFormula) -> bool {
    valuations(&[f]).iter().any(|v| v.satisfies(f))
}

pub fn implies(f: &PureFormula, g: &PureFormula) -> bool {
    valuations(&[f, g]).iter().all(|v| !v.satisfies(f) || v.satisfies(g))
}

const OPS: [RelOp; 6] = [RelOp::Lt, RelOp::Le, RelOp::Eq, RelOp::Ne, RelOp::Gt, RelOp::Ge];

/// Symbols `a..` split between pointers and integers, at most four in all.
pub struct Vocabulary {
    ptrs: Vec<String>,
    ints: Vec<String>,
}

impl Vocabulary {
    pub fn random(rng: &mut impl Rng) -> Self {
        let total = rng.gen_range(1..=4);
        let nptr = rng.gen_range(0..=total);
        let names = ["a", "b", "c", "d"];
        Vocabulary {
            ptrs: names[..nptr].iter().map(|s| s.to_string()).collect(),
            ints: names[nptr..total].iter().map(|s| s.to_string()).collect(),
        }
    }

    fn ptr_term(&self, rng: &mut impl Rng) -> PtrTerm {
        if rng.gen_bool(0.25) {
            PtrTerm::Nil
        } else {
            PtrTerm::sym(&self.ptrs[rng.gen_range(0..self.ptrs.len())])
        }
    }

    fn int_term(&self, rng: &mut impl Rng) -> IntTerm {
        if rng.gen_bool(0.3) {
            IntTerm::Const(rng.gen_range(-2..=2))
        } else {
            IntTerm::sym(&self.ints[rng.gen_range(0..self.ints.len())])
        }
    }

    pub fn literal(&self, rng: &mut impl Rng) -> Literal {
        let use_ptr = !self.ptrs.is_empty() && (self.ints.is_empty() || rng.gen_bool(0.5));
        if use_ptr {
            let (a, b) = (self.ptr_term(rng), self.ptr_term(rng));
            if rng.gen_bool(0.5) {
                Literal::PtrEq(a, b)
            } else {
                Literal::PtrNe(a, b)
            }
        } else {
            Literal::IntRel(self.int_term(rng), OPS[rng.gen_range(0..OPS.len())], self.int_term(rng))
        }
    }

    pub fn formula(&self, rng: &mut impl Rng, max_lits: usize) -> PureFormula {
        let n = rng.gen_range(0..=max_lits);
        PureFormula::from_lits((0..n).map(|_| self.literal(rng)))
    }
}
