//! Under-approximate symbolic execution producing per-path footprints.
//!
//! Every effect in a footprint is witnessed by a concrete run within the
//! loop-unroll bound: paths are only ever dropped, never merged.

mod bugs;
mod exec;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::Location;
use crate::solver::{IntTerm, PtrTerm, PureFormula};

pub use bugs::{bug_id, detect_bugs, validate, Bug, ValidationVerdict};
pub use exec::summarize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Iterations explored per `while` loop (and jumps per label).
    pub unroll: usize,
    /// Maximum number of effects per function.
    pub path_budget: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { unroll: 2, path_budget: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exit {
    Ok,
    Err,
    Abort,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exit::Ok => "ok",
            Exit::Err => "err",
            Exit::Abort => "abort",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugKind {
    Npe,
    Leak,
    DoubleFree,
    UseAfterFree,
}

impl fmt::Display for BugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BugKind::Npe => "npe",
            BugKind::Leak => "leak",
            BugKind::DoubleFree => "double_free",
            BugKind::UseAfterFree => "use_after_free",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Ptr(PtrTerm),
    Int(IntTerm),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Ptr(t) => write!(f, "{t}"),
            Value::Int(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpatialAtom {
    /// Stack binding `v |-> X`.
    VarPointsTo(String, Value),
    /// Heap cell `Y |-> X`.
    PointsTo(PtrTerm, PtrTerm),
    /// Deallocated location.
    Dealloc(PtrTerm),
}

impl fmt::Display for SpatialAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialAtom::VarPointsTo(v, x) => write!(f, "{v} |-> {x}"),
            SpatialAtom::PointsTo(y, x) => write!(f, "{y} |-> {x}"),
            SpatialAtom::Dealloc(x) => write!(f, "dealloc({x})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymState {
    pub pure: PureFormula,
    /// Separating conjunction of atoms; empty means `emp`.
    pub heap: Vec<SpatialAtom>,
    pub exvars: BTreeSet<String>,
}

impl fmt::Display for SymState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let heap = if self.heap.is_empty() {
            "emp".to_string()
        } else {
            self.heap.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" * ")
        };
        write!(f, "{}; {}", self.pure, heap)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrInfo {
    pub kind: BugKind,
    pub culprit: Location,
    /// Program variable holding the offending pointer, when there is one.
    pub var: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub pre: SymState,
    pub exit: Exit,
    pub post: SymState,
    pub ret: Option<Value>,
    /// Statement ordinals of the analysed function, in execution order.
    pub trace: Vec<usize>,
    pub errinfo: Option<ErrInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub function: String,
    pub effects: Vec<Effect>,
    /// The path budget ran out; some paths are missing.
    pub incomplete: bool,
    pub diagnostics: Vec<String>,
}
