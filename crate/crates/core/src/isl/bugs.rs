use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{summarize, AnalysisConfig, BugKind, Footprint};
use crate::error::AnalysisError;
use crate::lang::{LocMap, Location, Program};
use crate::solver::{canonical, implies, sat, PureFormula};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bug {
    pub id: String,
    pub kind: BugKind,
    /// Path condition under which the bug manifests.
    pub path: PureFormula,
    pub culprit: Location,
    /// Variable holding the culprit object, the starting point for taint.
    pub var: Option<String>,
    /// Footprint of the enclosing function.
    pub footprint: Footprint,
}

/// Stable identifier from kind, culprit statement and canonical path.
pub fn bug_id(kind: BugKind, culprit: &Location, path: &PureFormula) -> String {
    let key = format!("{kind}|{}|{}|{}", culprit.function, culprit.ordinal, canonical(path));
    let digest = Sha256::digest(key.as_bytes());
    hex::encode(&digest[..8])
}

/// All bugs of all functions, callees first.
pub fn detect_bugs(program: &Program, cfg: &AnalysisConfig) -> Result<Vec<Bug>, AnalysisError> {
    let mut bugs: Vec<Bug> = Vec::new();
    for name in program.bottom_up_order() {
        let fp = summarize(program, &name, cfg)?;
        for e in &fp.effects {
            let Some(info) = &e.errinfo else { continue };
            let id = bug_id(info.kind, &info.culprit, &e.post.pure);
            if bugs.iter().any(|b| b.id == id) {
                continue;
            }
            bugs.push(Bug {
                id,
                kind: info.kind,
                path: e.post.pure.clone(),
                culprit: info.culprit.clone(),
                var: info.var.clone(),
                footprint: fp.clone(),
            });
        }
    }
    Ok(bugs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub target_fixed: bool,
    pub new_bugs: Vec<Bug>,
    /// Analysis of the patched program failed or was incomplete.
    pub unknown: bool,
    pub plausible: bool,
}

/// Re-analyses a patched program. `locmap` maps ordinals of the patched
/// function before the patch to ordinals after it.
pub fn validate(
    patched: &Program,
    target: &Bug,
    baseline: &[Bug],
    locmap: &LocMap,
    cfg: &AnalysisConfig,
) -> ValidationVerdict {
    let unknown = ValidationVerdict { target_fixed: false, new_bugs: Vec::new(), unknown: true, plausible: false };
    let Ok(bugs) = detect_bugs(patched, cfg) else { return unknown };
    if bugs.iter().any(|b| b.footprint.incomplete) {
        return unknown;
    }
    let patched_fn = &target.culprit.function;
    let back: BTreeMap<usize, usize> = locmap.iter().map(|(old, new)| (*new, *old)).collect();
    // culprit of a patched-program bug in pre-patch ordinals; None for patch code
    let original = |b: &Bug| -> Option<Location> {
        if &b.culprit.function != patched_fn {
            return Some(b.culprit.clone());
        }
        back.get(&b.culprit.ordinal).map(|o| Location { ordinal: *o, ..b.culprit.clone() })
    };
    let target_fixed = !bugs.iter().any(|b| {
        b.kind == target.kind
            && original(b).is_some_and(|c| c.same_stmt(&target.culprit))
            && sat(&b.path.and(&target.path))
    });
    let new_bugs: Vec<Bug> = bugs
        .iter()
        .filter(|b| {
            let Some(c) = original(b) else { return true };
            !baseline.iter().any(|o| {
                o.kind == b.kind
                    && o.culprit.same_stmt(&c)
                    && (bug_id(b.kind, &c, &b.path) == o.id || implies(&b.path, &o.path))
            })
        })
        .cloned()
        .collect();
    let plausible = target_fixed && new_bugs.is_empty();
    ValidationVerdict { target_fixed, new_bugs, unknown: false, plausible }
}
