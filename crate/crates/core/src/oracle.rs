//! Differential validation of solver outcome pairs and classification of
//! divergences.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runner::{run_solver, ErrorReason, RunError, SolverOutcome, SolverSpec, Verdict};
use crate::smtlib::FormulaDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BugKind {
    Soundness,
    InvalidModel,
    Crash,
    Other,
}

impl BugKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BugKind::Soundness => "soundness",
            BugKind::InvalidModel => "invalid-model",
            BugKind::Crash => "crash",
            BugKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Culprit {
    S1,
    S2,
    Unknown,
}

/// Do two per-query verdict sequences conflict? A position conflicts only
/// when both entries are definite (sat/unsat) and differ; unknown and
/// timeout make a position non-comparable.
fn sequences_conflict(a: &[Verdict], b: &[Verdict]) -> bool {
    a.iter().zip(b).any(|(x, y)| {
        matches!(x, Verdict::Sat | Verdict::Unsat)
            && matches!(y, Verdict::Sat | Verdict::Unsat)
            && x != y
    })
}

fn is_failure(o: &SolverOutcome) -> bool {
    matches!(o.verdict, Verdict::Error | Verdict::Crash)
}

/// The differential check: returns `false` (bug trigger) iff either outcome
/// is an error or crash, or the verdict sequences conflict.
pub fn validate(o1: &SolverOutcome, o2: &SolverOutcome) -> bool {
    if is_failure(o1) || is_failure(o2) {
        return false;
    }
    !sequences_conflict(&o1.query_verdicts, &o2.query_verdicts)
}

/// Classify a divergence. Only meaningful when `validate` returned false;
/// total and single-valued on that side.
pub fn classify(o1: &SolverOutcome, o2: &SolverOutcome) -> (BugKind, Culprit) {
    match (o1.verdict == Verdict::Crash, o2.verdict == Verdict::Crash) {
        (true, _) => return (BugKind::Crash, Culprit::S1),
        (_, true) => return (BugKind::Crash, Culprit::S2),
        _ => {}
    }
    if o1.error_reason == Some(ErrorReason::ModelValidation) {
        return (BugKind::InvalidModel, Culprit::S1);
    }
    if o2.error_reason == Some(ErrorReason::ModelValidation) {
        return (BugKind::InvalidModel, Culprit::S2);
    }
    if o1.verdict == Verdict::Error {
        return (BugKind::Other, Culprit::S1);
    }
    if o2.verdict == Verdict::Error {
        return (BugKind::Other, Culprit::S2);
    }
    // both clean, so the verdicts must conflict; differential testing
    // cannot attribute the wrong side
    (BugKind::Soundness, Culprit::Unknown)
}

/// Run a parse-only SMT-LIB front end on the document; true iff it accepts
/// the script without a static sort error.
pub fn typecheck_probe(doc: &FormulaDocument, checker: &SolverSpec, scratch: &Path) -> Result<bool, RunError> {
    std::fs::write(scratch, doc.source())
        .map_err(|e| RunError::SpawnFailure(format!("write {}: {e}", scratch.display())))?;
    let out = run_solver(checker, scratch)?;
    Ok(!matches!(out.verdict, Verdict::Error | Verdict::Crash))
}
