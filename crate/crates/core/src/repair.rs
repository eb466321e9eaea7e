//! The repair loop: sample, cluster, reward, then validate one patch per
//! plausible class.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{ClassStore, EquivClass, Refined};
use crate::isl::{detect_bugs, summarize, validate, AnalysisConfig, Bug};
use crate::lang::{apply_patch, Location, Patch, Program};
use crate::localize::{collect_ingredients, localize};
use crate::meta::{abs, MetaFootprint};
use crate::pcfg::{build_grammar, Nonterminal, WeightedGrammar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairConfig {
    pub seed: u64,
    /// Wall-clock budget per bug in seconds.
    pub budget_s: f64,
    pub max_iters: usize,
    pub height: usize,
    pub unroll: usize,
    pub top_locs: usize,
    pub uniform: bool,
    pub member_fallback: bool,
    pub jobs: usize,
    pub path_budget: usize,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            seed: 0,
            budget_s: 60.0,
            max_iters: 2000,
            height: 6,
            unroll: 2,
            top_locs: 2,
            uniform: false,
            member_fallback: false,
            jobs: 1,
            path_budget: AnalysisConfig::default().path_budget,
        }
    }
}

impl RepairConfig {
    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig { unroll: self.unroll, path_budget: self.path_budget }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    /// Syntactically different synthesized patches.
    #[serde(rename = "Ps")]
    pub ps: usize,
    #[serde(rename = "C")]
    pub c: usize,
    /// Patches in plausible classes.
    #[serde(rename = "Plp")]
    pub plp: usize,
    /// Representatives of plausible classes.
    #[serde(rename = "Plp_r")]
    pub plp_r: usize,
    pub validations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub bug_id: String,
    pub rules_fired: Vec<usize>,
    pub class_key: Option<String>,
    pub tokens_pi: u64,
    pub tokens_e: u64,
    pub counters: Counters,
    /// Rule probabilities after this iteration's update: `[id, p_pi, p_e]`.
    pub probabilities: BTreeMap<Nonterminal, Vec<(usize, f64, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    NotAttempted,
    Passed,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ClassOutcome {
    pub class: EquivClass,
    pub validation: Validation,
    /// Member that passed validation, when it is not the representative.
    pub validated_member: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub bug: Bug,
    pub locations: Vec<Location>,
    pub grammar: Option<WeightedGrammar>,
    pub store: ClassStore,
    /// Every non-duplicate analysed patch with its abstracted footprint.
    pub explored: Vec<(Patch, MetaFootprint)>,
    pub stats: Vec<IterRecord>,
    pub counters: Counters,
    /// Plausible classes, validated ones first in rank order.
    pub outcomes: Vec<ClassOutcome>,
    pub error: Option<String>,
    pub iterations: usize,
}

impl Session {
    pub fn validated(&self) -> impl Iterator<Item = &ClassOutcome> {
        self.outcomes.iter().filter(|o| o.validation == Validation::Passed)
    }

    pub fn best_patch(&self) -> Option<&Patch> {
        self.validated().next().map(|o| &o.class.members[o.validated_member.unwrap_or(o.class.representative)])
    }
}

#[derive(Debug, Clone)]
pub struct RepairRun {
    pub config: RepairConfig,
    pub sessions: Vec<Session>,
}

impl RepairRun {
    /// Every bug has at least one validated class.
    pub fn all_fixed(&self) -> bool {
        self.sessions.iter().all(|s| s.validated().next().is_some())
    }
}

/// Stable order by representative size.
pub fn rank(classes: &mut [ClassOutcome]) {
    classes.sort_by_key(|o| o.class.representative().ast_size());
}

fn session_seed(seed: u64, bug: &Bug) -> u64 {
    seed ^ u64::from_str_radix(&bug.id, 16).unwrap_or(0)
}

/// Repairs every bug of `program`.
pub fn repair(program: &Program, cfg: &RepairConfig) -> crate::Result<RepairRun> {
    let bugs = detect_bugs(program, &cfg.analysis())?;
    let run = |b: &Bug| run_session(program, b, &bugs, cfg);
    let sessions = if cfg.jobs > 1 && bugs.len() > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build() {
            Ok(pool) => pool.install(|| bugs.par_iter().map(run).collect()),
            Err(_) => bugs.iter().map(run).collect(),
        }
    } else {
        bugs.iter().map(run).collect()
    };
    Ok(RepairRun { config: cfg.clone(), sessions })
}

/// One synthesise-cluster-reward session followed by validation.
pub fn run_session(program: &Program, bug: &Bug, baseline: &[Bug], cfg: &RepairConfig) -> Session {
    let mut s = Session {
        bug: bug.clone(),
        locations: Vec::new(),
        grammar: None,
        store: ClassStore::new(),
        explored: Vec::new(),
        stats: Vec::new(),
        counters: Counters::default(),
        outcomes: Vec::new(),
        error: None,
        iterations: 0,
    };
    s.locations = localize(program, bug, cfg.top_locs).into_iter().map(|l| l.location).collect();
    if s.locations.is_empty() {
        s.error = Some("no fix locations".into());
        return s;
    }
    let ing = collect_ingredients(program, bug, &s.locations);
    let mut g = match build_grammar(&ing, &s.locations, cfg.height) {
        Ok(g) => g,
        Err(e) => {
            s.error = Some(e.to_string());
            return s;
        }
    };
    let acfg = cfg.analysis();
    let base = abs(&bug.footprint);
    let fname = bug.culprit.function.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(session_seed(cfg.seed, bug));
    let start = Instant::now();
    let limit = Duration::from_secs_f64(cfg.budget_s.max(0.0));

    while s.iterations < cfg.max_iters && start.elapsed() < limit {
        let iter = s.iterations;
        s.iterations += 1;
        let d = match g.sample(&mut rng) {
            Ok(d) => d,
            Err(e) => {
                s.error = Some(e.to_string());
                break;
            }
        };
        let mut rec = IterRecord {
            iter,
            bug_id: bug.id.clone(),
            rules_fired: d.rules_used.clone(),
            class_key: None,
            tokens_pi: 0,
            tokens_e: 0,
            counters: s.counters,
            probabilities: BTreeMap::new(),
        };
        if !s.store.is_duplicate(&d.patch) {
            let fp = apply_patch(program, &d.patch).ok().and_then(|(q, _)| summarize(&q, &fname, &acfg).ok());
            if let Some(fp) = fp {
                let meta = abs(&fp);
                let refined = s.store.refine(d.patch.clone(), &meta, &base, bug);
                if let Some(i) = refined.class() {
                    s.counters.ps += 1;
                    s.explored.push((d.patch.clone(), meta));
                    let c = &s.store.classes[i];
                    rec.class_key = Some(c.key.clone());
                    (rec.tokens_pi, rec.tokens_e) = (c.reward_pi, c.reward_e);
                    if c.plausible {
                        s.counters.plp += 1;
                        if matches!(refined, Refined::Created(_)) {
                            s.counters.plp_r += 1;
                        }
                    }
                    if !cfg.uniform && rec.tokens_pi + rec.tokens_e > 0 {
                        // rule ids come from this grammar, so reward cannot fail
                        let _ = g.reward(&d.rules_used, rec.tokens_pi, rec.tokens_e);
                    }
                }
            }
        }
        s.counters.c = s.store.len();
        rec.counters = s.counters;
        rec.probabilities = g.probabilities();
        s.stats.push(rec);
    }
    s.grammar = Some(g);

    for class in s.store.classes.iter().filter(|c| c.plausible) {
        let mut order = vec![class.representative];
        if cfg.member_fallback {
            let mut rest: Vec<usize> = (0..class.members.len()).filter(|i| *i != class.representative).collect();
            rest.sort_by_key(|i| (class.members[*i].ast_size(), class.members[*i].text()));
            order.extend(rest);
        }
        let mut outcome = ClassOutcome { class: class.clone(), validation: Validation::Failed, validated_member: None };
        for m in order {
            let Ok((q, map)) = apply_patch(program, &class.members[m]) else { continue };
            s.counters.validations += 1;
            if validate(&q, bug, baseline, &map, &acfg).plausible {
                outcome.validation = Validation::Passed;
                outcome.validated_member = (m != class.representative).then_some(m);
                break;
            }
        }
        s.outcomes.push(outcome);
    }
    let (mut passed, failed): (Vec<_>, Vec<_>) =
        std::mem::take(&mut s.outcomes).into_iter().partition(|o| o.validation == Validation::Passed);
    rank(&mut passed);
    s.outcomes = passed.into_iter().chain(failed).collect();
    s
}
