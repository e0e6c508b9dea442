//! Execution of external SMT solver binaries and normalization of their
//! outcomes.

use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Byte cap on the stdout/stderr buffers stored in an outcome. Verdicts and
/// diagnostics are parsed from a streaming scan, never from the capped copy.
const OUTPUT_CAP: usize = 256 * 1024;

pub const DEFAULT_TIMEOUT_SECS: u64 = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    /// Short label, e.g. "z3" or "cvc5".
    pub id: String,
    /// Executable and argument template; exactly one element contains the
    /// `{}` placeholder for the input file.
    pub command: Vec<String>,
    pub timeout_secs: u64,
    pub memory_limit_mb: Option<u64>,
    /// The spec includes the solver's own model-check option.
    pub model_validation: bool,
    #[serde(default)]
    pub env: Vec<(String, String)>,
}

impl SolverSpec {
    pub fn from_template(id: &str, template: &str, timeout_secs: u64) -> Result<Self, RunError> {
        let mut parts: Vec<String> = template.split_whitespace().map(String::from).collect();
        if parts.is_empty() {
            return Err(RunError::BadTemplate("empty command".into()));
        }
        let placeholders = parts.iter().filter(|p| p.contains("{}")).count();
        match placeholders {
            0 => parts.push("{}".to_string()),
            1 => {}
            _ => {
                return Err(RunError::BadTemplate(
                    "more than one `{}` placeholder".into(),
                ))
            }
        }
        Ok(SolverSpec {
            id: id.to_string(),
            command: parts,
            timeout_secs,
            memory_limit_mb: None,
            model_validation: false,
            env: Vec::new(),
        })
    }

    fn argv(&self, input: &Path) -> Vec<String> {
        self.command
            .iter()
            .map(|a| a.replace("{}", &input.to_string_lossy()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    Error,
    Crash,
}

/// Why an exit-zero run is classified as an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorReason {
    /// `(error ...)` diagnostic or equivalent.
    Diagnostic,
    /// Model validation failed (invalid model).
    ModelValidation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub solver_id: String,
    pub verdict: Verdict,
    /// One entry per check-sat query, in order.
    pub query_verdicts: Vec<Verdict>,
    /// Exit code, or None when killed by a signal.
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wall_ms: u64,
    pub timed_out: bool,
    pub error_reason: Option<ErrorReason>,
    /// Assertion-violation or sanitizer markers were seen in the output.
    pub crash_markers: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot spawn solver: {0}")]
    SpawnFailure(String),
    #[error("bad command template: {0}")]
    BadTemplate(String),
}

fn is_verdict_line(line: &str) -> Option<Verdict> {
    match line.trim() {
        "sat" => Some(Verdict::Sat),
        "unsat" => Some(Verdict::Unsat),
        "unknown" => Some(Verdict::Unknown),
        _ => None,
    }
}

fn has_error_diagnostic(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("(error") || t.starts_with("error:") || t.starts_with("(err ")
}

fn has_model_validation_failure(line: &str) -> bool {
    let l = line.to_ascii_lowercase();
    l.contains("invalid model")
        || l.contains("model is not")
        || l.contains("failed to validate model")
        || l.contains("model check failed")
}

fn has_crash_marker(line: &str) -> bool {
    line.contains("Assertion")
        || line.contains("ASSERTION")
        || line.contains("Fatal failure")
        || line.contains("ERROR: AddressSanitizer")
        || line.contains("SUMMARY: AddressSanitizer")
        || line.contains("Segmentation fault")
}

#[derive(Default)]
struct StreamScan {
    capped: String,
    verdicts: Vec<Verdict>,
    error: bool,
    model_failure: bool,
    crash_marker: bool,
}

fn scan_stream(mut reader: impl Read, collect_verdicts: bool) -> StreamScan {
    let mut scan = StreamScan::default();
    let mut buf = [0u8; 8192];
    let mut pending = String::new();
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        let chunk = String::from_utf8_lossy(&buf[..n]);
        if scan.capped.len() < OUTPUT_CAP {
            let room = OUTPUT_CAP - scan.capped.len();
            scan.capped.extend(chunk.chars().take(room));
        }
        pending.push_str(&chunk);
        while let Some(pos) = pending.find('\n') {
            let line: String = pending.drain(..=pos).collect();
            scan_line(&mut scan, line.trim_end_matches('\n'), collect_verdicts);
        }
    }
    if !pending.is_empty() {
        scan_line(&mut scan, &pending, collect_verdicts);
    }
    scan
}

fn scan_line(scan: &mut StreamScan, line: &str, collect_verdicts: bool) {
    if collect_verdicts {
        if let Some(v) = is_verdict_line(line) {
            scan.verdicts.push(v);
        }
    }
    if has_error_diagnostic(line) {
        scan.error = true;
    }
    if has_model_validation_failure(line) {
        scan.model_failure = true;
    }
    if has_crash_marker(line) {
        scan.crash_marker = true;
    }
}

/// Kill an entire process group, then reap the child.
fn kill_group(child: &mut Child) {
    let pid = child.id() as i32;
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Run one solver on one input file. Blocking; the child runs in its own
/// process group which is killed wholesale on timeout.
pub fn run_solver(spec: &SolverSpec, input: &Path) -> Result<SolverOutcome, RunError> {
    let argv = spec.argv(input);
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for (k, v) in &spec.env {
        cmd.env(k, v);
    }
    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| RunError::SpawnFailure(format!("{}: {e}", argv[0])))?;

    let stdout = child.stdout.take().expect("stdout piped");
    let stderr = child.stderr.take().expect("stderr piped");
    let (tx_out, rx_out) = mpsc::channel();
    let (tx_err, rx_err) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx_out.send(scan_stream(stdout, true));
    });
    thread::spawn(move || {
        let _ = tx_err.send(scan_stream(stderr, false));
    });

    let timeout = Duration::from_secs(spec.timeout_secs);
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if start.elapsed() >= timeout {
                    timed_out = true;
                    kill_group(&mut child);
                    break None;
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(_) => break None,
        }
    };
    // a normally exited child can still leave grandchildren behind that hold
    // the pipe write ends open; sweep the group before joining the readers
    if !timed_out {
        let pid = child.id() as i32;
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let deadline = Duration::from_secs(2);
    let out_scan = rx_out.recv_timeout(deadline).unwrap_or_default();
    let err_scan = rx_err.recv_timeout(deadline).unwrap_or_default();
    let wall_ms = start.elapsed().as_millis() as u64;

    let exit_code = status.and_then(|s| s.code());
    let signal = status.and_then(|s| s.signal());
    let crash_markers = out_scan.crash_marker || err_scan.crash_marker;
    let model_failure = out_scan.model_failure || err_scan.model_failure;
    let error_diag = out_scan.error || err_scan.error;

    let nonzero = signal.is_some() || matches!(exit_code, Some(c) if c != 0);
    let (verdict, error_reason) = if timed_out {
        (Verdict::Timeout, None)
    } else if nonzero {
        // non-zero exit and no timeout: crash
        (Verdict::Crash, None)
    } else if model_failure {
        (Verdict::Error, Some(ErrorReason::ModelValidation))
    } else if error_diag {
        (Verdict::Error, Some(ErrorReason::Diagnostic))
    } else if let Some(first) = out_scan.verdicts.first() {
        (*first, None)
    } else {
        (Verdict::Unknown, None)
    };

    Ok(SolverOutcome {
        solver_id: spec.id.clone(),
        verdict,
        query_verdicts: out_scan.verdicts,
        exit_code,
        signal,
        stdout: out_scan.capped,
        stderr: err_scan.capped,
        wall_ms,
        timed_out,
        error_reason,
        crash_markers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::os::unix::fs::PermissionsExt;
    use tempfile::TempDir;

    fn mock(dir: &TempDir, name: &str, script: &str) -> SolverSpec {
        let path = dir.path().join(name);
        fs::write(&path, format!("#!/bin/sh\n{script}\n")).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        SolverSpec::from_template(name, &format!("{} {{}}", path.display()), 2).unwrap()
    }

    fn input(dir: &TempDir) -> std::path::PathBuf {
        let p = dir.path().join("input.smt2");
        fs::write(&p, "(check-sat)\n").unwrap();
        p
    }

    #[test]
    fn sat_verdict() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-sat", "echo sat");
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.verdict, Verdict::Sat);
        assert_eq!(out.query_verdicts, vec![Verdict::Sat]);
        assert_eq!(out.exit_code, Some(0));
    }

    #[test]
    fn crash_keeps_partial_output() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-crash", "echo partial; kill -SEGV $$");
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.verdict, Verdict::Crash);
        assert_eq!(out.signal, Some(libc::SIGSEGV));
        assert!(out.stdout.contains("partial"));
    }

    #[test]
    fn nonzero_exit_is_crash() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-exit3", "exit 3");
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.verdict, Verdict::Crash);
        assert_eq!(out.exit_code, Some(3));
    }

    #[test]
    fn two_query_script() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-two", "echo unsat; echo sat");
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.query_verdicts, vec![Verdict::Unsat, Verdict::Sat]);
    }

    #[test]
    fn error_diagnostic_with_zero_exit() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-err", "echo '(error \"bad sort\")'");
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.verdict, Verdict::Error);
        assert_eq!(out.error_reason, Some(ErrorReason::Diagnostic));
    }

    #[test]
    fn model_validation_failure_tagged() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-inv", "echo sat; echo 'invalid model detected'");
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.verdict, Verdict::Error);
        assert_eq!(out.error_reason, Some(ErrorReason::ModelValidation));
    }

    #[test]
    fn timeout_within_half_second() {
        let dir = TempDir::new().unwrap();
        let spec = mock(&dir, "mock-slow", "sleep 4; echo sat");
        let start = Instant::now();
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.verdict, Verdict::Timeout);
        assert!(out.timed_out);
        assert!(start.elapsed() < Duration::from_millis(2500));
    }

    #[test]
    fn no_orphan_grandchildren() {
        let dir = TempDir::new().unwrap();
        let pidfile = dir.path().join("grandchild.pid");
        let spec = mock(
            &dir,
            "mock-orphan",
            &format!("sleep 30 & echo $! > {}\nsleep 30", pidfile.display()),
        );
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert!(out.timed_out);
        let pid: i32 = fs::read_to_string(&pidfile).unwrap().trim().parse().unwrap();
        // give the kill a moment to land; an unreaped zombie counts as dead
        thread::sleep(Duration::from_millis(100));
        let alive = match fs::read_to_string(format!("/proc/{pid}/stat")) {
            Err(_) => false,
            Ok(stat) => {
                let state = stat
                    .rsplit(')')
                    .next()
                    .and_then(|rest| rest.trim().chars().next());
                state != Some('Z')
            }
        };
        assert!(!alive, "grandchild {pid} survived");
    }

    #[test]
    fn missing_binary_is_spawn_failure() {
        let dir = TempDir::new().unwrap();
        let spec = SolverSpec::from_template("ghost", "/nonexistent/solver {}", 1).unwrap();
        assert!(matches!(
            run_solver(&spec, &input(&dir)),
            Err(RunError::SpawnFailure(_))
        ));
    }

    #[test]
    fn template_placeholder_rules() {
        assert!(SolverSpec::from_template("a", "z3 {} {}", 1).is_err());
        let implicit = SolverSpec::from_template("a", "z3 -smt2", 1).unwrap();
        assert_eq!(implicit.command.last().unwrap(), "{}");
    }

    #[test]
    fn verdict_survives_output_cap() {
        let dir = TempDir::new().unwrap();
        // flood stdout well past the cap, then emit the verdict
        let spec = mock(
            &dir,
            "mock-flood",
            "i=0; while [ $i -lt 40000 ]; do echo 'xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx'; i=$((i+1)); done; echo unsat",
        );
        let out = run_solver(&spec, &input(&dir)).unwrap();
        assert_eq!(out.query_verdicts, vec![Verdict::Unsat]);
        assert!(out.stdout.len() <= OUTPUT_CAP);
    }
}
