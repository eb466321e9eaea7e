//! Equivalence classes of patches keyed by their footprint difference.

use std::collections::{HashMap, HashSet};

use crate::isl::{Bug, Exit};
use crate::lang::Patch;
use crate::meta::{footprint_diff, is_plausible_class, MetaFootprint, Summary};

#[derive(Debug, Clone)]
pub struct EquivClass {
    pub summary: Summary,
    pub key: String,
    pub members: Vec<Patch>,
    /// Index into `members`.
    pub representative: usize,
    pub plausible: bool,
    pub reward_pi: u64,
    pub reward_e: u64,
}

impl EquivClass {
    pub fn representative(&self) -> &Patch {
        &self.members[self.representative]
    }

    fn push(&mut self, p: Patch) {
        self.members.push(p);
        let rank = |p: &Patch| (p.ast_size(), p.text());
        let best = (0..self.members.len()).min_by_key(|&i| rank(&self.members[i])).unwrap_or(0);
        self.representative = best;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refined {
    Duplicate,
    Joined(usize),
    Created(usize),
}

impl Refined {
    pub fn class(self) -> Option<usize> {
        match self {
            Refined::Duplicate => None,
            Refined::Joined(i) | Refined::Created(i) => Some(i),
        }
    }
}

/// Classes in discovery order.
#[derive(Debug, Clone, Default)]
pub struct ClassStore {
    pub classes: Vec<EquivClass>,
    by_key: HashMap<String, usize>,
    seen: HashSet<String>,
}

impl ClassStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Patches equal up to unreachable trailing code count as duplicates.
    pub fn is_duplicate(&self, p: &Patch) -> bool {
        self.seen.contains(&p.live_text())
    }

    /// Files `p` under the class of its diff against the bug footprint `base`.
    pub fn refine(&mut self, p: Patch, fp: &MetaFootprint, base: &MetaFootprint, bug: &Bug) -> Refined {
        if !self.seen.insert(p.live_text()) {
            return Refined::Duplicate;
        }
        let summary = footprint_diff(fp, base, Some(&bug.path));
        let key = summary.key();
        if let Some(&i) = self.by_key.get(&key) {
            self.classes[i].push(p);
            return Refined::Joined(i);
        }
        let (reward_pi, reward_e) = compute_reward(&summary);
        let i = self.classes.len();
        self.classes.push(EquivClass {
            plausible: is_plausible_class(&summary),
            summary,
            key: key.clone(),
            members: vec![p],
            representative: 0,
            reward_pi,
            reward_e,
        });
        self.by_key.insert(key, i);
        Refined::Created(i)
    }
}

/// Token tiers `(path, effect)` earned by a class.
pub fn compute_reward(summary: &Summary) -> (u64, u64) {
    let (buggy, other): (Vec<_>, Vec<_>) = summary.entries.iter().partition(|e| e.buggy);
    let buggy_changed = buggy.iter().any(|e| !e.is_identity());
    let others_same = other.iter().all(|e| e.is_identity());
    let pi = match (buggy_changed, others_same) {
        (true, true) => 3,
        (true, false) => 1,
        _ => 0,
    };
    let fixed = !buggy.is_empty() && buggy.iter().all(|e| e.exit_to == Exit::Ok);
    let new_failure = summary.entries.iter().any(|e| e.exit_to != Exit::Ok && e.exit_changed());
    let e = if fixed && !new_failure {
        3
    } else if buggy.iter().any(|e| e.heap_changed() || e.exit_changed()) {
        1
    } else {
        0
    };
    (pi, e)
}
