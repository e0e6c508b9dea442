//! Built-in structural reducer for bug-triggering mutants.
//!
//! Reduction passes, applied to fixpoint or budget: top-level command
//! deletion (ddmin), hoisting a sub-argument over its enclosing compound
//! expression, and literal simplification. Every accepted step re-checks
//! the oracle with the same bug kind and de-dup key.

use std::collections::HashSet;
use std::path::PathBuf;

use thiserror::Error;

use crate::dedup::{dedup_key, theory_tag};
use crate::oracle::{classify, validate, BugKind};
use crate::runner::{run_solver, RunError, SolverSpec, Verdict};
use crate::smtlib::{tokenize, FormulaDocument, Token, TokenKind};
use crate::typing::SignatureTable;

pub const DEFAULT_BUDGET: usize = 2000;

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub original_bytes: usize,
    pub reduced_bytes: usize,
    pub reduced_text: String,
    pub iterations: usize,
    pub oracle_runs: usize,
}

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("trigger no longer reproduces")]
    NonReproducing,
    #[error("oracle failed: {0}")]
    Oracle(String),
}

/// Re-runs a candidate and reports its (kind, dedup key) when it still
/// triggers.
pub trait InterestOracle {
    fn probe(&mut self, candidate: &str) -> Result<Option<(BugKind, String)>, String>;
}

impl<F> InterestOracle for F
where
    F: FnMut(&str) -> Result<Option<(BugKind, String)>, String>,
{
    fn probe(&mut self, candidate: &str) -> Result<Option<(BugKind, String)>, String> {
        self(candidate)
    }
}

/// Oracle backed by the real solver pair.
pub struct SolverPairOracle {
    pub s1: SolverSpec,
    pub s2: SolverSpec,
    pub table: SignatureTable,
    pub scratch: PathBuf,
}

impl SolverPairOracle {
    pub fn probe_pair(&self, candidate: &str) -> Result<Option<(BugKind, String)>, RunError> {
        let Ok(doc) = FormulaDocument::parse(candidate, &self.table.operator_names()) else {
            return Ok(None);
        };
        std::fs::write(&self.scratch, candidate)
            .map_err(|e| RunError::SpawnFailure(format!("write scratch: {e}")))?;
        let o1 = run_solver(&self.s1, &self.scratch)?;
        let o2 = run_solver(&self.s2, &self.scratch)?;
        if validate(&o1, &o2) {
            return Ok(None);
        }
        let (kind, _) = classify(&o1, &o2);
        let theory = theory_tag(&doc);
        let crash_outcome = if o1.verdict == Verdict::Crash {
            Some(&o1)
        } else if o2.verdict == Verdict::Crash {
            Some(&o2)
        } else {
            None
        };
        Ok(Some((kind, dedup_key(kind, &theory, crash_outcome))))
    }
}

impl InterestOracle for SolverPairOracle {
    fn probe(&mut self, candidate: &str) -> Result<Option<(BugKind, String)>, String> {
        self.probe_pair(candidate).map_err(|e| e.to_string())
    }
}

/// One top-level command with its source text.
#[derive(Debug, Clone)]
struct Command {
    text: String,
    /// Name introduced by a declaration/definition command, if any.
    declares: Option<String>,
    /// Symbols referenced in this command.
    references: HashSet<String>,
}

fn split_commands(text: &str) -> Option<Vec<Command>> {
    let tokens = tokenize(text).ok()?;
    let mut commands = Vec::new();
    let mut i = 0usize;
    while i < tokens.len() {
        if tokens[i].kind == TokenKind::Comment {
            i += 1;
            continue;
        }
        if tokens[i].kind != TokenKind::LParen {
            i += 1;
            continue;
        }
        let start = i;
        let mut depth = 0usize;
        while i < tokens.len() {
            match tokens[i].kind {
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        let group = &tokens[start..=i.min(tokens.len() - 1)];
        commands.push(command_of(group, text));
        i += 1;
    }
    Some(commands)
}

fn command_of(group: &[Token], source: &str) -> Command {
    let begin = group.first().map(|t| t.span.offset).unwrap_or(0);
    let end = group.last().map(|t| t.span.end()).unwrap_or(0);
    let text = source[begin..end].to_string();
    let head = group
        .iter()
        .skip(1)
        .find(|t| t.kind != TokenKind::Comment)
        .filter(|t| t.kind == TokenKind::Symbol)
        .map(|t| t.text.clone());
    let declares = match head.as_deref() {
        Some(
            "declare-fun" | "declare-const" | "define-fun" | "define-fun-rec" | "declare-sort"
            | "define-sort",
        ) => group
            .iter()
            .skip(2)
            .find(|t| t.kind == TokenKind::Symbol)
            .map(|t| t.text.clone()),
        _ => None,
    };
    let references = group
        .iter()
        .skip(2)
        .filter(|t| t.kind == TokenKind::Symbol)
        .map(|t| t.text.clone())
        .collect();
    Command {
        text,
        declares,
        references,
    }
}

fn render(commands: &[Command], keep: &[bool]) -> String {
    let mut out = String::new();
    for (cmd, kept) in commands.iter().zip(keep) {
        if *kept {
            out.push_str(&cmd.text);
            out.push('\n');
        }
    }
    out
}

/// Re-add declarations whose name is referenced by any kept command.
/// Iterates because definitions may reference earlier declarations.
fn close_over_declarations(commands: &[Command], keep: &mut [bool]) {
    loop {
        let mut referenced: HashSet<&str> = HashSet::new();
        for (cmd, kept) in commands.iter().zip(keep.iter()) {
            if *kept {
                referenced.extend(cmd.references.iter().map(|s| s.as_str()));
            }
        }
        let mut changed = false;
        for (ix, cmd) in commands.iter().enumerate() {
            if !keep[ix] {
                if let Some(name) = &cmd.declares {
                    if referenced.contains(name.as_str()) {
                        keep[ix] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
}

struct Session<'a> {
    oracle: &'a mut dyn InterestOracle,
    kind: BugKind,
    key: String,
    budget: usize,
    runs: usize,
}

impl<'a> Session<'a> {
    fn exhausted(&self) -> bool {
        self.runs >= self.budget
    }

    fn interesting(&mut self, candidate: &str) -> Result<bool, ReduceError> {
        if self.exhausted() {
            return Ok(false);
        }
        self.runs += 1;
        match self.oracle.probe(candidate).map_err(ReduceError::Oracle)? {
            Some((kind, key)) => Ok(kind == self.kind && key == self.key),
            None => Ok(false),
        }
    }
}

/// ddmin over top-level commands; returns the reduced text.
fn ddmin_commands(text: &str, session: &mut Session) -> Result<String, ReduceError> {
    let Some(commands) = split_commands(text) else {
        return Ok(text.to_string());
    };
    if commands.len() <= 1 {
        return Ok(text.to_string());
    }
    let mut keep = vec![true; commands.len()];
    let mut granularity = 2usize;
    loop {
        let kept_ix: Vec<usize> = (0..commands.len()).filter(|i| keep[*i]).collect();
        if kept_ix.len() < 2 || session.exhausted() {
            break;
        }
        let chunk = (kept_ix.len() / granularity).max(1);
        let mut reduced_this_round = false;
        let mut offset = 0usize;
        while offset < kept_ix.len() {
            let removal: Vec<usize> = kept_ix[offset..(offset + chunk).min(kept_ix.len())].to_vec();
            let mut trial = keep.clone();
            for ix in &removal {
                trial[*ix] = false;
            }
            close_over_declarations(&commands, &mut trial);
            if trial != keep && session.interesting(&render(&commands, &trial))? {
                keep = trial;
                reduced_this_round = true;
                break;
            }
            offset += chunk;
        }
        if reduced_this_round {
            granularity = 2;
            continue;
        }
        if chunk == 1 {
            break;
        }
        granularity = (granularity * 2).min(kept_ix.len());
    }
    // 1-minimality over single commands, budget permitting
    loop {
        let mut improved = false;
        for ix in 0..commands.len() {
            if !keep[ix] || session.exhausted() {
                continue;
            }
            let mut trial = keep.clone();
            trial[ix] = false;
            close_over_declarations(&commands, &mut trial);
            if trial != keep && session.interesting(&render(&commands, &trial))? {
                keep = trial;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(render(&commands, &keep))
}

/// Expression spans (byte ranges) of compound groups nested inside
/// commands, with the spans of their argument expressions.
fn hoist_candidates(text: &str) -> Vec<(std::ops::Range<usize>, Vec<std::ops::Range<usize>>)> {
    let Ok(tokens) = tokenize(text) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (i, tok) in tokens.iter().enumerate() {
        match tok.kind {
            TokenKind::LParen => {
                depth += 1;
                if depth >= 3 {
                    // a compound expression strictly inside a command body
                    let mut d = 0usize;
                    let mut end = i;
                    for (j, t) in tokens.iter().enumerate().skip(i) {
                        match t.kind {
                            TokenKind::LParen => d += 1,
                            TokenKind::RParen => {
                                d -= 1;
                                if d == 0 {
                                    end = j;
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                    let whole = tok.span.offset..tokens[end].span.end();
                    let mut args = Vec::new();
                    let mut j = i + 1;
                    let mut first = true;
                    while j < end {
                        if tokens[j].kind == TokenKind::Comment {
                            j += 1;
                            continue;
                        }
                        let (arg_end, arg_range) = if tokens[j].kind == TokenKind::LParen {
                            let mut dd = 0usize;
                            let mut k = j;
                            while k <= end {
                                match tokens[k].kind {
                                    TokenKind::LParen => dd += 1,
                                    TokenKind::RParen => {
                                        dd -= 1;
                                        if dd == 0 {
                                            break;
                                        }
                                    }
                                    _ => {}
                                }
                                k += 1;
                            }
                            (k, tokens[j].span.offset..tokens[k].span.end())
                        } else {
                            (j, tokens[j].span.offset..tokens[j].span.end())
                        };
                        if first {
                            first = false; // skip the head symbol
                        } else {
                            args.push(arg_range);
                        }
                        j = arg_end + 1;
                    }
                    out.push((whole, args));
                }
            }
            TokenKind::RParen => depth -= 1,
            _ => {}
        }
    }
    out
}

fn hoist_pass(text: &str, session: &mut Session) -> Result<Option<String>, ReduceError> {
    for (whole, args) in hoist_candidates(text) {
        for arg in args {
            if session.exhausted() {
                return Ok(None);
            }
            if arg == whole {
                continue;
            }
            let mut candidate = String::with_capacity(text.len());
            candidate.push_str(&text[..whole.start]);
            candidate.push_str(&text[arg.clone()]);
            candidate.push_str(&text[whole.end..]);
            if candidate.len() < text.len() && session.interesting(&candidate)? {
                return Ok(Some(candidate));
            }
        }
    }
    Ok(None)
}

fn literal_pass(text: &str, session: &mut Session) -> Result<Option<String>, ReduceError> {
    let Ok(tokens) = tokenize(text) else {
        return Ok(None);
    };
    for tok in &tokens {
        let replacements: &[&str] = match tok.kind {
            TokenKind::Numeral if tok.text != "0" && tok.text != "1" => &["0", "1"],
            TokenKind::Decimal if tok.text != "0.0" && tok.text != "1.0" => &["0.0", "1.0"],
            TokenKind::StringLit if tok.text.len() > 2 => &["\"\""],
            _ => continue,
        };
        for rep in replacements {
            if session.exhausted() {
                return Ok(None);
            }
            let mut candidate = String::with_capacity(text.len());
            candidate.push_str(&text[..tok.span.offset]);
            candidate.push_str(rep);
            candidate.push_str(&text[tok.span.end()..]);
            if session.interesting(&candidate)? {
                return Ok(Some(candidate));
            }
        }
    }
    Ok(None)
}

/// Reduce `text` while preserving the oracle's kind and de-dup key.
/// `expected` pins the identity the trigger must keep; the initial probe
/// confirms it still reproduces.
pub fn reduce(
    text: &str,
    expected_kind: BugKind,
    expected_key: &str,
    oracle: &mut dyn InterestOracle,
    budget: usize,
) -> Result<ReductionResult, ReduceError> {
    let mut session = Session {
        oracle,
        kind: expected_kind,
        key: expected_key.to_string(),
        budget,
        runs: 0,
    };
    if !session.interesting(text)? {
        return Err(ReduceError::NonReproducing);
    }
    let mut current = text.to_string();
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        let mut progressed = false;
        let after_ddmin = ddmin_commands(&current, &mut session)?;
        if after_ddmin.len() < current.len() {
            current = after_ddmin;
            progressed = true;
        }
        while let Some(next) = hoist_pass(&current, &mut session)? {
            current = next;
            progressed = true;
        }
        while let Some(next) = literal_pass(&current, &mut session)? {
            current = next;
            progressed = true;
        }
        if !progressed || session.exhausted() {
            break;
        }
    }
    Ok(ReductionResult {
        original_bytes: text.len(),
        reduced_bytes: current.len(),
        reduced_text: current,
        iterations,
        oracle_runs: session.runs,
    })
}
