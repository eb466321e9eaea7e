//! Machine-readable reports for `analyze` and `repair`.

use serde::Serialize;
use serde_json::Value as Json;

use crate::isl::{Bug, BugKind, Footprint};
use crate::lang::{Location, SpanMap};
use crate::meta::{abs, MetaFootprint};
use crate::repair::{Counters, RepairConfig, RepairRun, Session, Validation};

pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourcePos {
    pub line: usize,
    pub col: usize,
}

fn pos(spans: &SpanMap, loc: &Location) -> SourcePos {
    let (line, col) = spans.get(&(loc.function.clone(), loc.ordinal)).copied().unwrap_or((0, 0));
    SourcePos { line, col }
}

#[derive(Debug, Clone, Serialize)]
pub struct BugHeader {
    pub id: String,
    pub kind: BugKind,
    pub function: String,
    pub culprit: SourcePos,
    pub path: String,
}

impl BugHeader {
    fn new(b: &Bug, spans: &SpanMap) -> Self {
        BugHeader {
            id: b.id.clone(),
            kind: b.kind,
            function: b.culprit.function.clone(),
            culprit: pos(spans, &b.culprit),
            path: b.path.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PatchRef {
    pub text: String,
    pub ast_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub summary: Json,
    pub plausible: bool,
    pub validated: bool,
    pub validation: Validation,
    pub representative: PatchRef,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BugReport {
    #[serde(flatten)]
    pub bug: BugHeader,
    pub stats: Counters,
    pub iterations: usize,
    pub error: Option<String>,
    pub classes: Vec<ClassReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputReport {
    pub version: &'static str,
    pub generated_at: u64,
    pub config: RepairConfig,
    pub bugs: Vec<BugReport>,
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn class_report(summary_key: &str, plausible: bool, validation: Validation, members: &[crate::lang::Patch], rep: usize) -> ClassReport {
    let r = &members[rep];
    ClassReport {
        summary: serde_json::from_str(summary_key).unwrap_or(Json::Null),
        plausible,
        validated: validation == Validation::Passed,
        validation,
        representative: PatchRef { text: r.text(), ast_size: r.ast_size() },
        members: members.iter().map(|m| m.text()).collect(),
    }
}

fn bug_report(s: &Session, spans: &SpanMap) -> BugReport {
    // validated classes in rank order, then failed plausible ones, then the rest
    let mut classes: Vec<ClassReport> = s
        .outcomes
        .iter()
        .map(|o| {
            let rep = o.validated_member.unwrap_or(o.class.representative);
            class_report(&o.class.key, true, o.validation, &o.class.members, rep)
        })
        .collect();
    classes.extend(s.store.classes.iter().filter(|c| !c.plausible).map(|c| {
        class_report(&c.key, false, Validation::NotAttempted, &c.members, c.representative)
    }));
    BugReport {
        bug: BugHeader::new(&s.bug, spans),
        stats: s.counters,
        iterations: s.iterations,
        error: s.error.clone(),
        classes,
    }
}

pub fn repair_report(run: &RepairRun, spans: &SpanMap) -> OutputReport {
    OutputReport {
        version: REPORT_VERSION,
        generated_at: now(),
        config: run.config.clone(),
        bugs: run.sessions.iter().map(|s| bug_report(s, spans)).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionReport {
    pub name: String,
    pub incomplete: bool,
    pub diagnostics: Vec<String>,
    pub footprint: Footprint,
    pub meta: MetaFootprint,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub version: &'static str,
    pub bugs: Vec<BugHeader>,
    pub functions: Vec<FunctionReport>,
}

pub fn analysis_report(bugs: &[Bug], footprints: Vec<Footprint>, spans: &SpanMap) -> AnalysisReport {
    AnalysisReport {
        version: REPORT_VERSION,
        bugs: bugs.iter().map(|b| BugHeader::new(b, spans)).collect(),
        functions: footprints
            .into_iter()
            .map(|fp| FunctionReport {
                name: fp.function.clone(),
                incomplete: fp.incomplete,
                diagnostics: fp.diagnostics.clone(),
                meta: abs(&fp),
                footprint: fp,
            })
            .collect(),
    }
}

/// Report JSON with the timestamp blanked, for comparing runs.
pub fn without_timestamp(report: &OutputReport) -> Json {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["generated_at"] = Json::from(0);
    v
}
