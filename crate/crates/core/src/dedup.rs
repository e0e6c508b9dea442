//! Bug-trigger de-duplication and the report queue.
//!
//! Crash triggers are keyed by assertion site or sanitizer trace; soundness
//! and invalid-model triggers by theory. At most one trigger per key is
//! queued for reporting; the rest are parked until the representative is
//! marked fixed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::oracle::{BugKind, Culprit};
use crate::runner::SolverOutcome;
use crate::smtlib::FormulaDocument;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BugTrigger {
    pub kind: BugKind,
    pub culprit: Culprit,
    pub theory_tag: String,
    pub dedup_key: String,
    pub seed_path: String,
    pub step: usize,
    pub rng_state_digest: String,
    /// Mutant bytes, base64 in the persisted JSONL.
    #[serde(with = "b64")]
    pub mutant_text: Vec<u8>,
    pub outcomes: (SolverOutcome, SolverOutcome),
}

mod b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)
    }
}

fn assertion_site_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"([A-Za-z0-9_./\-]+\.(?:cpp|cc|cxx|c|h|hpp|rs))[:(](\d+)").unwrap()
    })
}

fn sanitizer_frame_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "    #3 0x55... in ns::func(args) /path/file.cpp:12"
    RE.get_or_init(|| Regex::new(r"#\d+\s+0x[0-9a-fA-F]+\s+in\s+([^\s(]+)").unwrap())
}

/// Last two path components, so temp prefixes never leak into keys.
fn repo_relative_tail(path: &str) -> String {
    let parts: Vec<&str> = path.split('/').filter(|p| !p.is_empty()).collect();
    match parts.len() {
        0 => String::new(),
        1 => parts[0].to_string(),
        n => format!("{}/{}", parts[n - 2], parts[n - 1]),
    }
}

fn signal_name(sig: i32) -> String {
    match sig {
        libc::SIGSEGV => "SIGSEGV".to_string(),
        libc::SIGABRT => "SIGABRT".to_string(),
        libc::SIGBUS => "SIGBUS".to_string(),
        libc::SIGFPE => "SIGFPE".to_string(),
        libc::SIGILL => "SIGILL".to_string(),
        libc::SIGKILL => "SIGKILL".to_string(),
        other => format!("SIG{other}"),
    }
}

/// Stable key for a crash or assertion-style error outcome.
///
/// Preference order: first assertion site (file:line with the path stripped
/// to its repo-relative tail), then a digest of the top sanitizer frames,
/// then an unattributed fallback keyed by exit code or signal.
pub fn crash_signature(outcome: &SolverOutcome) -> String {
    let combined = format!("{}\n{}", outcome.stderr, outcome.stdout);
    let assertion_context = combined
        .lines()
        .find(|l| l.contains("Assertion") || l.contains("ASSERTION") || l.contains("Fatal failure"));
    if let Some(line) = assertion_context {
        if let Some(cap) = assertion_site_re().captures(line) {
            return format!("assert:{}:{}", repo_relative_tail(&cap[1]), &cap[2]);
        }
    }
    if combined.contains("AddressSanitizer") {
        let frames: Vec<String> = combined
            .lines()
            .filter_map(|l| sanitizer_frame_re().captures(l))
            .map(|c| c[1].to_string())
            .take(5)
            .collect();
        if !frames.is_empty() {
            let mut hasher = Sha256::new();
            for f in &frames {
                hasher.update(f.as_bytes());
                hasher.update(b"\n");
            }
            let digest = hasher.finalize();
            let mut hex = String::new();
            for b in &digest[..8] {
                let _ = write!(hex, "{b:02x}");
            }
            return format!("segv:{hex}");
        }
    }
    // any assertion line without a parsable site still beats the fallback
    if let Some(cap) = assertion_site_re().captures(&combined) {
        return format!("assert:{}:{}", repo_relative_tail(&cap[1]), &cap[2]);
    }
    let tail = match (outcome.signal, outcome.exit_code) {
        (Some(sig), _) => signal_name(sig),
        (None, Some(code)) => code.to_string(),
        (None, None) => "unknown".to_string(),
    };
    format!("crash:unattributed:{tail}")
}

/// Coarse theory tag: the `set-logic` argument when present, else a guess
/// from the vocabulary, else "Uncategorized".
pub fn theory_tag(doc: &FormulaDocument) -> String {
    if let Some(logic) = doc.logic() {
        return logic.to_string();
    }
    let mut has_string = false;
    let mut has_bv = false;
    let mut has_quant = false;
    let mut has_real = false;
    let mut has_array = false;
    let mut has_int = false;
    for tok in doc.tokens() {
        match tok.text.as_str() {
            t if t.starts_with("str.") || t == "String" => has_string = true,
            t if t.starts_with("bv") || t.starts_with("#x") || t.starts_with("#b") => has_bv = true,
            "BitVec" => has_bv = true,
            "forall" | "exists" => has_quant = true,
            "Real" => has_real = true,
            "Int" => has_int = true,
            "select" | "store" | "Array" => has_array = true,
            _ => {}
        }
    }
    if has_string {
        "QF_S-like".to_string()
    } else if has_bv {
        "QF_BV-like".to_string()
    } else if has_array {
        "A-like".to_string()
    } else if has_quant && has_real {
        "NRA-like".to_string()
    } else if has_quant && has_int {
        "LIA-like".to_string()
    } else if has_real {
        "QF_NRA-like".to_string()
    } else if has_int {
        "QF_LIA-like".to_string()
    } else {
        "Uncategorized".to_string()
    }
}

/// The de-dup key of a trigger: pure in its stored fields.
pub fn dedup_key(kind: BugKind, theory: &str, crash_outcome: Option<&SolverOutcome>) -> String {
    match kind {
        BugKind::Crash => match crash_outcome {
            Some(o) => crash_signature(o),
            None => "crash:unattributed:unknown".to_string(),
        },
        BugKind::Soundness => format!("soundness:{theory}"),
        BugKind::InvalidModel => format!("invalid-model:{theory}"),
        BugKind::Other => format!("other:{theory}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotState {
    Queued,
    Parked,
    Fixed,
}

/// Trigger store with the one-representative-per-key reporting queue and
/// append-only JSONL persistence.
pub struct TriggerStore {
    triggers: Vec<BugTrigger>,
    states: Vec<SlotState>,
    by_key: HashMap<String, Vec<usize>>,
    jsonl: Option<File>,
    triggers_dir: Option<PathBuf>,
}

impl TriggerStore {
    pub fn in_memory() -> Self {
        TriggerStore {
            triggers: Vec::new(),
            states: Vec::new(),
            by_key: HashMap::new(),
            jsonl: None,
            triggers_dir: None,
        }
    }

    /// Persisting store: `<out_dir>/triggers.jsonl` plus raw mutants under
    /// `<out_dir>/triggers/`.
    pub fn persistent(out_dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let triggers_dir = out_dir.join("triggers");
        std::fs::create_dir_all(&triggers_dir)?;
        let jsonl = OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join("triggers.jsonl"))?;
        Ok(TriggerStore {
            triggers: Vec::new(),
            states: Vec::new(),
            by_key: HashMap::new(),
            jsonl: Some(jsonl),
            triggers_dir: Some(triggers_dir),
        })
    }

    /// Insert a trigger. Returns true when it became the queued
    /// representative of its key, false when parked behind one.
    pub fn insert(&mut self, trigger: BugTrigger) -> std::io::Result<bool> {
        if let Some(f) = self.jsonl.as_mut() {
            let mut line = serde_json::to_string(&trigger).expect("trigger serializes");
            line.push('\n');
            // one write per line so an interrupt never tears a record
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        if let Some(dir) = &self.triggers_dir {
            let stem = Path::new(&trigger.seed_path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "seed".to_string());
            let name = format!("{stem}-{}-{}.smt2", trigger.step, self.triggers.len());
            std::fs::write(dir.join(name), &trigger.mutant_text)?;
        }
        let ix = self.triggers.len();
        let slots = self.by_key.entry(trigger.dedup_key.clone()).or_default();
        let queued = !slots
            .iter()
            .any(|s| self.states[*s] == SlotState::Queued);
        slots.push(ix);
        self.triggers.push(trigger);
        self.states.push(if queued {
            SlotState::Queued
        } else {
            SlotState::Parked
        });
        Ok(queued)
    }

    /// Queued representatives, one per key.
    pub fn report_queue(&self) -> Vec<&BugTrigger> {
        self.triggers
            .iter()
            .zip(&self.states)
            .filter(|(_, s)| **s == SlotState::Queued)
            .map(|(t, _)| t)
            .collect()
    }

    /// Mark the queued representative of `key` fixed; the next parked
    /// trigger of that key (if any) becomes queued.
    pub fn mark_fixed(&mut self, key: &str) -> bool {
        let Some(slots) = self.by_key.get(key) else {
            return false;
        };
        let Some(&queued) = slots.iter().find(|s| self.states[**s] == SlotState::Queued) else {
            return false;
        };
        self.states[queued] = SlotState::Fixed;
        if let Some(&next) = slots.iter().find(|s| self.states[**s] == SlotState::Parked) {
            self.states[next] = SlotState::Queued;
        }
        true
    }

    pub fn len(&self) -> usize {
        self.triggers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }

    pub fn triggers(&self) -> &[BugTrigger] {
        &self.triggers
    }

    pub fn distinct_keys(&self) -> usize {
        self.by_key.len()
    }

    /// Reload triggers from a previously written JSONL file.
    pub fn load_jsonl(path: &Path) -> std::io::Result<Vec<BugTrigger>> {
        let text = std::fs::read_to_string(path)?;
        let mut out = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
            })?);
        }
        Ok(out)
    }
}

/// Digest of a trigger's identity fields, for run-to-run reproducibility
/// checks.
pub fn trigger_digest(t: &BugTrigger) -> String {
    let mut hasher = Sha256::new();
    hasher.update(t.kind.as_str().as_bytes());
    hasher.update(t.dedup_key.as_bytes());
    hasher.update(&t.mutant_text);
    let digest = hasher.finalize();
    let mut hex = String::new();
    for b in &digest[..12] {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Verdict;
    use std::collections::BTreeSet;

    fn crash_outcome(stderr: &str, signal: Option<i32>) -> SolverOutcome {
        SolverOutcome {
            solver_id: "s1".into(),
            verdict: Verdict::Crash,
            query_verdicts: vec![],
            exit_code: if signal.is_some() { None } else { Some(1) },
            signal,
            stdout: String::new(),
            stderr: stderr.to_string(),
            wall_ms: 1,
            timed_out: false,
            error_reason: None,
            crash_markers: !stderr.is_empty(),
        }
    }

    #[test]
    fn assertion_site_key() {
        let o = crash_outcome("ASSERTION VIOLATION src/ast/ast.cpp:423", None);
        assert_eq!(crash_signature(&o), "assert:ast/ast.cpp:423");
    }

    #[test]
    fn sanitizer_traces_ignore_temp_paths() {
        let trace = |tmp: &str| {
            format!(
                "==12==ERROR: AddressSanitizer: heap-use-after-free\n    #0 0x4f in solver::core::run() {tmp}/a.cpp:10\n    #1 0x50 in solver::core::tick() {tmp}/b.cpp:20\n"
            )
        };
        let a = crash_outcome(&trace("/tmp/run-1234"), Some(libc::SIGSEGV));
        let b = crash_outcome(&trace("/tmp/run-9876"), Some(libc::SIGSEGV));
        assert_eq!(crash_signature(&a), crash_signature(&b));
        assert!(crash_signature(&a).starts_with("segv:"));
    }

    #[test]
    fn signal_fallback_key() {
        let o = crash_outcome("", Some(libc::SIGSEGV));
        assert_eq!(crash_signature(&o), "crash:unattributed:SIGSEGV");
    }

    #[test]
    fn theory_from_set_logic() {
        let table: BTreeSet<String> = ["=", "*"].iter().map(|s| s.to_string()).collect();
        let doc = FormulaDocument::parse(
            "(set-logic NRA)\n(declare-fun a () Real)\n(assert (= (* a a) 1))\n(check-sat)",
            &table,
        )
        .unwrap();
        assert_eq!(theory_tag(&doc), "NRA");
    }

    #[test]
    fn theory_inference_fallbacks() {
        let table: BTreeSet<String> = ["=", "forall"].iter().map(|s| s.to_string()).collect();
        let strings =
            FormulaDocument::parse("(assert (= (str.++ a b) c))", &table).unwrap();
        assert_eq!(theory_tag(&strings), "QF_S-like");
        let quant_real = FormulaDocument::parse(
            "(declare-fun x () Real)(assert (forall ((y Real)) (= x y)))",
            &table,
        )
        .unwrap();
        assert_eq!(theory_tag(&quant_real), "NRA-like");
        let empty = FormulaDocument::parse("", &table).unwrap();
        assert_eq!(theory_tag(&empty), "Uncategorized");
    }

    fn trigger(kind: BugKind, key: &str) -> BugTrigger {
        BugTrigger {
            kind,
            culprit: Culprit::Unknown,
            theory_tag: "NRA".into(),
            dedup_key: key.to_string(),
            seed_path: "seed.smt2".into(),
            step: 1,
            rng_state_digest: "d".into(),
            mutant_text: b"(check-sat)".to_vec(),
            outcomes: (
                crash_outcome("", None),
                crash_outcome("", None),
            ),
        }
    }

    #[test]
    fn one_representative_per_key() {
        let mut store = TriggerStore::in_memory();
        assert!(store.insert(trigger(BugKind::Soundness, "soundness:NRA")).unwrap());
        assert!(!store.insert(trigger(BugKind::Soundness, "soundness:NRA")).unwrap());
        assert!(!store.insert(trigger(BugKind::Soundness, "soundness:NRA")).unwrap());
        assert_eq!(store.report_queue().len(), 1);
    }

    #[test]
    fn distinct_crash_sites_both_queue() {
        let mut store = TriggerStore::in_memory();
        assert!(store.insert(trigger(BugKind::Crash, "assert:a.cpp:1")).unwrap());
        assert!(store.insert(trigger(BugKind::Crash, "assert:b.cpp:2")).unwrap());
        assert_eq!(store.report_queue().len(), 2);
    }

    #[test]
    fn mark_fixed_releases_next_parked() {
        let mut store = TriggerStore::in_memory();
        store.insert(trigger(BugKind::Soundness, "soundness:NRA")).unwrap();
        store.insert(trigger(BugKind::Soundness, "soundness:NRA")).unwrap();
        assert_eq!(store.report_queue().len(), 1);
        assert!(store.mark_fixed("soundness:NRA"));
        assert_eq!(store.report_queue().len(), 1);
        assert!(store.mark_fixed("soundness:NRA"));
        assert_eq!(store.report_queue().len(), 0);
        assert!(!store.mark_fixed("soundness:NRA"));
    }

    #[test]
    fn queued_keys_are_pairwise_distinct() {
        let mut store = TriggerStore::in_memory();
        for key in ["soundness:NRA", "soundness:NRA", "soundness:QF_S-like", "assert:x.cpp:3"] {
            store.insert(trigger(BugKind::Soundness, key)).unwrap();
        }
        let keys: BTreeSet<_> = store
            .report_queue()
            .iter()
            .map(|t| t.dedup_key.clone())
            .collect();
        assert_eq!(keys.len(), store.report_queue().len());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::TempDir::new().unwrap();
        {
            let mut store = TriggerStore::persistent(dir.path()).unwrap();
            store.insert(trigger(BugKind::Soundness, "soundness:NRA")).unwrap();
            store.insert(trigger(BugKind::Crash, "assert:a.cpp:1")).unwrap();
        }
        let reloaded = TriggerStore::load_jsonl(&dir.path().join("triggers.jsonl")).unwrap();
        assert_eq!(reloaded.len(), 2);
        assert_eq!(reloaded[0].dedup_key, "soundness:NRA");
        assert_eq!(reloaded[0].mutant_text, b"(check-sat)");
        // raw mutants alongside
        let count = std::fs::read_dir(dir.path().join("triggers")).unwrap().count();
        assert_eq!(count, 2);
    }

    #[test]
    fn dedup_key_is_pure() {
        let o = crash_outcome("ASSERTION VIOLATION src/ast/ast.cpp:423", None);
        let k1 = dedup_key(BugKind::Crash, "NRA", Some(&o));
        let k2 = dedup_key(BugKind::Crash, "NRA", Some(&o));
        assert_eq!(k1, k2);
        assert_eq!(dedup_key(BugKind::Soundness, "NRA", None), "soundness:NRA");
    }
}
