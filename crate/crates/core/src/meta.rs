//! The meta domain: footprints reduced to exit, return term and the sets of
//! allocated (H) and deallocated (D) locations, with aliases (A) taken from
//! path equalities. Used to compare patched functions against the buggy one
//! without spatial entailment.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::isl::{Exit, Footprint, SpatialAtom, SymState, Value};
use crate::solver::{canonical, equivalent, implies, CanonPure, Closure, IntTerm, Literal, PtrTerm, PureFormula};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaState {
    pub path: PureFormula,
    pub exit: Exit,
    pub ret: Option<Value>,
    pub h: BTreeSet<String>,
    pub d: BTreeSet<String>,
    pub a: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaEffect {
    pub exit: Exit,
    pub ret: Option<Value>,
    pub pre: MetaState,
    pub post: MetaState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaFootprint {
    pub effects: Vec<MetaEffect>,
}

/// Abstraction of one symbolic state.
pub fn abs_state(s: &SymState, exit: Exit, ret: Option<Value>) -> MetaState {
    let mut st = MetaState {
        path: s.pure.clone(),
        exit,
        ret,
        h: BTreeSet::new(),
        d: BTreeSet::new(),
        a: BTreeSet::new(),
    };
    for atom in &s.heap {
        match atom {
            SpatialAtom::PointsTo(y, _) => {
                st.h.insert(y.name().to_string());
            }
            SpatialAtom::Dealloc(x) => {
                st.d.insert(x.name().to_string());
            }
            SpatialAtom::VarPointsTo(..) => {}
        }
    }
    for l in &s.pure.lits {
        if let Literal::PtrEq(p, q) = l {
            st.a.insert((p.name().to_string(), q.name().to_string()));
        }
    }
    st
}

pub fn abs(fp: &Footprint) -> MetaFootprint {
    let effects = fp
        .effects
        .iter()
        .map(|e| MetaEffect {
            exit: e.exit,
            ret: e.ret.clone(),
            pre: abs_state(&e.pre, e.exit, None),
            post: abs_state(&e.post, e.exit, e.ret.clone()),
        })
        .collect();
    MetaFootprint { effects }
}

fn alias_lits(a: &BTreeSet<(String, String)>) -> impl Iterator<Item = Literal> + '_ {
    a.iter().map(|(p, q)| Literal::ptr_eq(term(p), term(q)))
}

fn term(name: &str) -> PtrTerm {
    if name == "nil" {
        PtrTerm::Nil
    } else {
        PtrTerm::sym(name)
    }
}

/// Closure of a path together with alias sets.
fn closure_with(path: &PureFormula, aliases: &[&BTreeSet<(String, String)>]) -> Closure {
    let mut f = path.clone();
    for a in aliases {
        for l in alias_lits(a) {
            f.push(l);
        }
    }
    Closure::new(&f)
}

fn reps(c: &Closure, set: &BTreeSet<String>) -> BTreeSet<String> {
    set.iter().map(|x| c.ptr_rep(&term(x)).name().to_string()).collect()
}

fn ret_rep(c: &Closure, ret: &Option<Value>) -> Option<String> {
    ret.as_ref().map(|v| match v {
        Value::Ptr(t) => format!("ptr:{}", c.ptr_rep(t)),
        Value::Int(t) => match c.int_rep(t) {
            IntTerm::Const(k) => format!("int:{k}"),
            IntTerm::Sym(s) => format!("int:{s}"),
        },
    })
}

/// Equivalent paths, same exit, and equal H, D and return term modulo aliases.
pub fn states_indistinguishable(s1: &MetaState, s2: &MetaState) -> bool {
    if s1.exit != s2.exit || !equivalent(&s1.path, &s2.path) {
        return false;
    }
    let c = closure_with(&s1.path.and(&s2.path), &[&s1.a, &s2.a]);
    reps(&c, &s1.h) == reps(&c, &s2.h) && reps(&c, &s1.d) == reps(&c, &s2.d) && ret_rep(&c, &s1.ret) == ret_rep(&c, &s2.ret)
}

pub fn effects_indistinguishable(e1: &MetaEffect, e2: &MetaEffect) -> bool {
    e1.exit == e2.exit && states_indistinguishable(&e1.pre, &e2.pre) && states_indistinguishable(&e1.post, &e2.post)
}

/// Every effect of each footprint has an indistinguishable partner in the other.
pub fn footprints_indistinguishable(f1: &MetaFootprint, f2: &MetaFootprint) -> bool {
    let covers = |a: &MetaFootprint, b: &MetaFootprint| {
        a.effects.iter().all(|x| b.effects.iter().any(|y| effects_indistinguishable(x, y)))
    };
    covers(f1, f2) && covers(f2, f1)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateDiff {
    /// Canonical path of the patched effect's state.
    pub path: CanonPure,
    /// H of the patched state symmetric-minus H of the original.
    pub h: Vec<String>,
    pub d: Vec<String>,
    /// Merged alias classes.
    pub a: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EffectDiff {
    /// Exit of the original effect; `None` marks a path the patch introduced.
    pub exit_from: Option<Exit>,
    pub exit_to: Exit,
    /// The patched effect's path implies the bug's path.
    pub buggy: bool,
    pub ret: Option<String>,
    pub ret_before: Option<String>,
    pub pre: StateDiff,
    pub post: StateDiff,
}

impl EffectDiff {
    /// Same exit, same return term, no change to H or D.
    pub fn is_identity(&self) -> bool {
        self.exit_from == Some(self.exit_to)
            && self.ret == self.ret_before
            && self.pre.h.is_empty()
            && self.pre.d.is_empty()
            && self.post.h.is_empty()
            && self.post.d.is_empty()
    }

    pub fn heap_changed(&self) -> bool {
        !(self.pre.h.is_empty() && self.pre.d.is_empty() && self.post.h.is_empty() && self.post.d.is_empty())
    }

    pub fn exit_changed(&self) -> bool {
        self.exit_from != Some(self.exit_to)
    }
}

/// Sorted, deduplicated set of effect differences; its JSON text is the class key.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Summary {
    pub entries: Vec<EffectDiff>,
}

impl Summary {
    pub fn key(&self) -> String {
        serde_json::to_string(&self.entries).expect("summary serializes")
    }

    pub fn is_identity(&self) -> bool {
        self.entries.iter().all(EffectDiff::is_identity)
    }
}

fn state_diff(p: &MetaState, b: Option<&MetaState>) -> StateDiff {
    let empty = BTreeSet::new();
    let no_alias = BTreeSet::new();
    let (bh, bd, ba) = match b {
        Some(b) => (&b.h, &b.d, &b.a),
        None => (&empty, &empty, &no_alias),
    };
    let c = closure_with(&p.path, &[&p.a, ba]);
    let sym = |x: BTreeSet<String>, y: BTreeSet<String>| x.symmetric_difference(&y).cloned().collect::<Vec<_>>();
    StateDiff {
        path: canonical(&p.path),
        h: sym(reps(&c, &p.h), reps(&c, bh)),
        d: sym(reps(&c, &p.d), reps(&c, bd)),
        a: c.ptr_classes(),
    }
}

/// The original effect a patched one is compared against: the candidate
/// with the strongest path among those the patched path implies.
fn counterpart<'a>(e: &MetaEffect, fb: &'a MetaFootprint) -> Option<&'a MetaEffect> {
    let cands: Vec<&MetaEffect> = fb.effects.iter().filter(|b| implies(&e.post.path, &b.post.path)).collect();
    let strongest: Vec<&MetaEffect> = cands
        .iter()
        .copied()
        .filter(|c| cands.iter().all(|o| implies(&c.post.path, &o.post.path)))
        .collect();
    let pool = if strongest.is_empty() { cands } else { strongest };
    pool.into_iter().min_by_key(|b| (canonical(&b.post.path), b.exit))
}

/// P.F - b.F, with entries flagged by whether they lie on `bug_path`.
pub fn footprint_diff(fp: &MetaFootprint, fb: &MetaFootprint, bug_path: Option<&PureFormula>) -> Summary {
    let mut entries: Vec<EffectDiff> = fp
        .effects
        .iter()
        .map(|e| {
            let b = counterpart(e, fb);
            let c = closure_with(&e.post.path, &[&e.post.a, b.map(|b| &b.post.a).unwrap_or(&BTreeSet::new())]);
            EffectDiff {
                exit_from: b.map(|b| b.exit),
                exit_to: e.exit,
                buggy: bug_path.is_some_and(|bp| implies(&e.post.path, bp)),
                ret: ret_rep(&c, &e.ret),
                ret_before: b.and_then(|b| ret_rep(&c, &b.ret)),
                pre: state_diff(&e.pre, b.map(|b| &b.pre)),
                post: state_diff(&e.post, b.map(|b| &b.post)),
            }
        })
        .collect();
    entries.sort();
    entries.dedup();
    Summary { entries }
}

/// Buggy-path entries exit ok; every other entry is unchanged.
pub fn is_plausible_class(summary: &Summary) -> bool {
    summary.entries.iter().all(|e| if e.buggy { e.exit_to == Exit::Ok } else { e.is_identity() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isl::{detect_bugs, summarize, AnalysisConfig};
    use crate::lang::{apply_patch, parse, Patch, Program};

    pub(crate) const RUNNING: &str = "fn verify_param_zero(p: ptr) {\n    [p] := NULL;\n    return 0;\n}\n\nfn verify_param_new() {\n    param := malloc();\n    [param] := NULL;\n    r := verify_param_zero(param);\n    return param;\n}\n";

    fn st(path: Vec<Literal>, h: &[&str], d: &[&str]) -> MetaState {
        let path = PureFormula::from_lits(path);
        let a = path
            .lits
            .iter()
            .filter_map(|l| match l {
                Literal::PtrEq(p, q) => Some((p.name().to_string(), q.name().to_string())),
                _ => None,
            })
            .collect();
        MetaState {
            path,
            exit: Exit::Ok,
            ret: None,
            h: h.iter().map(|s| s.to_string()).collect(),
            d: d.iter().map(|s| s.to_string()).collect(),
            a,
        }
    }

    fn patched_meta(src: &str, patch_src: &str, after: usize) -> MetaFootprint {
        let p = parse(src).unwrap();
        let body = parse(&format!("fn tmp(param: ptr) {{ {patch_src} return NULL; }}")).unwrap();
        let mut stmts = body.functions[0].body.clone();
        stmts.pop();
        let patch = Patch::insert(stmts, crate::lang::Location::at("verify_param_new", after));
        let (q, _) = apply_patch(&p, &patch).unwrap();
        meta_of(&q)
    }

    fn meta_of(p: &Program) -> MetaFootprint {
        abs(&summarize(p, "verify_param_new", &AnalysisConfig::default()).unwrap())
    }

    #[test]
    fn abs_rules() {
        let s = SymState {
            pure: PureFormula::from_lits([Literal::ptr_eq(PtrTerm::sym("p"), PtrTerm::sym("q"))]),
            heap: vec![
                SpatialAtom::PointsTo(PtrTerm::sym("Y"), PtrTerm::sym("X")),
                SpatialAtom::Dealloc(PtrTerm::sym("Z")),
            ],
            exvars: BTreeSet::new(),
        };
        let m = abs_state(&s, Exit::Ok, None);
        assert_eq!(m.h, BTreeSet::from(["Y".to_string()]));
        assert_eq!(m.d, BTreeSet::from(["Z".to_string()]));
        assert_eq!(m.a, BTreeSet::from([("p".to_string(), "q".to_string())]));
        let e = abs_state(&SymState::default(), Exit::Ok, None);
        assert!(e.h.is_empty() && e.d.is_empty() && e.a.is_empty());
    }

    #[test]
    fn running_example_abs() {
        let m = meta_of(&parse(RUNNING).unwrap());
        assert_eq!(m.effects.len(), 2);
        let ok = &m.effects[1];
        assert_eq!(ok.post.h, BTreeSet::from(["param".to_string()]));
        assert!(ok.post.d.is_empty());
        assert_eq!(ok.ret, Some(Value::Ptr(PtrTerm::sym("param"))));
    }

    #[test]
    fn state_indistinguishability_examples() {
        let x = st(vec![], &["X"], &[]);
        assert!(states_indistinguishable(&x, &x));
        let eq = Literal::ptr_eq(PtrTerm::sym("X"), PtrTerm::sym("Y"));
        assert!(states_indistinguishable(&st(vec![eq.clone()], &["X"], &[]), &st(vec![eq], &["Y"], &[])));
        let nil = st(vec![Literal::ptr_eq(PtrTerm::sym("param"), PtrTerm::Nil)], &[], &[]);
        let nonnil = st(vec![Literal::ptr_ne(PtrTerm::sym("param"), PtrTerm::Nil)], &[], &[]);
        assert!(!states_indistinguishable(&nil, &nonnil));
    }

    #[test]
    fn equivalent_null_checks_are_indistinguishable() {
        let a = patched_meta(RUNNING, "if (param == NULL) { return NULL; }", 0);
        let b = patched_meta(RUNNING, "if (!(param != NULL)) { return param; }", 0);
        let c = patched_meta(RUNNING, "if (param == NULL) { return param; }", 0);
        assert!(footprints_indistinguishable(&a, &b));
        assert!(footprints_indistinguishable(&b, &c));
        for (x, y) in a.effects.iter().zip(&b.effects) {
            assert!(effects_indistinguishable(x, y));
        }
        let buggy = meta_of(&parse(RUNNING).unwrap());
        assert!(!footprints_indistinguishable(&a, &buggy));
        assert!(footprints_indistinguishable(&buggy, &buggy));
    }

    #[test]
    fn diff_of_fix_against_bug() {
        let p = parse(RUNNING).unwrap();
        let bug = &detect_bugs(&p, &AnalysisConfig::default()).unwrap()[0];
        let buggy = abs(&bug.footprint);
        let fixed = patched_meta(RUNNING, "if (param == NULL) { return NULL; }", 0);
        let s = footprint_diff(&fixed, &buggy, Some(&bug.path));
        let changed: Vec<_> = s.entries.iter().filter(|e| !e.is_identity()).collect();
        assert_eq!(changed.len(), 1);
        assert_eq!((changed[0].exit_from, changed[0].exit_to), (Some(Exit::Err), Exit::Ok));
        assert!(changed[0].buggy && !changed[0].heap_changed());
        assert!(is_plausible_class(&s));

        assert!(footprint_diff(&buggy, &buggy, Some(&bug.path)).is_identity());
    }

    #[test]
    fn diff_of_app_malloc_patch() {
        let src = format!(
            "{RUNNING}\nfn app_malloc() {{\n    q := malloc();\n    if (q == NULL) {{\n        abort();\n    }}\n    return q;\n}}\n"
        );
        let p = parse(&src).unwrap();
        let bug = detect_bugs(&p, &AnalysisConfig::default()).unwrap().into_iter().find(|b| b.culprit.function == "verify_param_new").unwrap();
        let patch = Patch::insert(
            vec![crate::lang::Stmt::new(crate::lang::StmtKind::Call {
                target: Some("param".into()),
                func: "app_malloc".into(),
                args: vec![],
            })],
            crate::lang::Location::at("verify_param_new", 0),
        );
        let (q, _) = apply_patch(&p, &patch).unwrap();
        let s = footprint_diff(&meta_of(&q), &abs(&bug.footprint), Some(&bug.path));
        assert!(s.entries.iter().any(|e| e.buggy && e.exit_from == Some(Exit::Err) && e.exit_to == Exit::Abort));
        assert!(s.entries.iter().any(|e| !e.buggy && e.exit_from == Some(Exit::Ok) && e.exit_to == Exit::Err && e.post.h == vec!["q".to_string()]));
        assert!(!is_plausible_class(&s));
    }
}
