//! The differential fuzzing main loop: parallel workers draw random
//! seeds, run chained operator mutations, execute both solvers on every
//! mutant, and store de-duplicated bug triggers.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use opfuzz_core::dedup::{dedup_key, theory_tag, trigger_digest};
use opfuzz_core::mutator::RandomChoices;
use opfuzz_core::oracle::{classify, validate};
use opfuzz_core::reducer::{reduce, SolverPairOracle, DEFAULT_BUDGET};
use opfuzz_core::runner::run_solver;
use opfuzz_core::typing::SignatureTable;
use opfuzz_core::{fuzz_walk, BugTrigger, FormulaDocument, TriggerStore, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{FuzzConfig, ReduceMode};
use crate::seed_scan::{seed_scan, SeedFile};

#[derive(Debug, Default)]
pub struct FuzzSummary {
    pub walks: u64,
    pub mutants_tested: u64,
    pub triggers: usize,
    pub distinct_keys: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub by_theory: BTreeMap<String, usize>,
    pub skipped_seeds: usize,
    pub elapsed: Duration,
}

impl FuzzSummary {
    pub fn print(&self) {
        println!("walks:          {}", self.walks);
        println!("mutants tested: {}", self.mutants_tested);
        let secs = self.elapsed.as_secs_f64().max(1e-9);
        println!(
            "throughput:     {:.1} mutants/s over {:.1}s",
            self.mutants_tested as f64 / secs,
            self.elapsed.as_secs_f64()
        );
        println!(
            "triggers:       {} ({} distinct keys)",
            self.triggers, self.distinct_keys
        );
        if self.skipped_seeds > 0 {
            println!("skipped seeds:  {}", self.skipped_seeds);
        }
        for (kind, count) in &self.by_kind {
            println!("  kind {kind}: {count}");
        }
        for (theory, count) in &self.by_theory {
            println!("  theory {theory}: {count}");
        }
    }
}

/// Deterministic per-walk plan: which seed to mutate and the walk's RNG
/// seed. Walk ordinals are globally unique, so with a fixed `rng_seed`
/// and one worker the whole run replays exactly.
pub fn draw_for_walk(rng_seed: u64, ordinal: u64, n_seeds: usize) -> (usize, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(ordinal.wrapping_add(1));
    let seed_ix = rng.gen_range(0..n_seeds);
    (seed_ix, rng.gen::<u64>())
}

fn smoke_test(config: &FuzzConfig) -> Result<()> {
    let scratch = config.out_dir.join("smoke.smt2");
    std::fs::write(&scratch, "(check-sat)\n").context("writing smoke-test script")?;
    for spec in [&config.solver1, &config.solver2] {
        run_solver(spec, &scratch)
            .with_context(|| format!("startup smoke test for {}", spec.id))?;
    }
    let _ = std::fs::remove_file(&scratch);
    Ok(())
}

struct Shared {
    store: Mutex<TriggerStore>,
    stop: Arc<AtomicBool>,
    walk_counter: AtomicUsize,
    mutants: AtomicU64,
    walks_done: AtomicU64,
}

pub fn fuzz_main(config: &FuzzConfig, stop: Arc<AtomicBool>) -> Result<FuzzSummary> {
    config.validate()?;
    let table = config.signature_table()?;
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;

    let inventory = seed_scan(&config.seeds, &table);
    for (path, reason) in &inventory.skipped {
        eprintln!("warning: skipping seed {}: {reason}", path.display());
    }
    if inventory.seeds.is_empty() {
        bail!("no usable seed files found");
    }
    smoke_test(config)?;

    let store = TriggerStore::persistent(&config.out_dir)
        .with_context(|| format!("opening trigger store in {}", config.out_dir.display()))?;
    let shared = Shared {
        store: Mutex::new(store),
        stop,
        walk_counter: AtomicUsize::new(0),
        mutants: AtomicU64::new(0),
        walks_done: AtomicU64::new(0),
    };
    let start = Instant::now();
    let deadline = config.max_runtime_secs.map(Duration::from_secs);

    std::thread::scope(|scope| {
        for worker in 0..config.workers {
            let shared = &shared;
            let table = &table;
            let seeds = &inventory.seeds;
            scope.spawn(move || {
                worker_loop(worker, config, table, seeds, shared, start, deadline);
            });
        }
    });

    let elapsed = start.elapsed();
    let store = shared.store.into_inner().expect("store lock");
    let mut summary = FuzzSummary {
        walks: shared.walks_done.load(Ordering::Relaxed),
        mutants_tested: shared.mutants.load(Ordering::Relaxed),
        triggers: store.len(),
        distinct_keys: store.distinct_keys(),
        skipped_seeds: inventory.skipped.len(),
        elapsed,
        ..FuzzSummary::default()
    };
    for t in store.triggers() {
        *summary.by_kind.entry(t.kind.as_str().to_string()).or_default() += 1;
        *summary.by_theory.entry(t.theory_tag.clone()).or_default() += 1;
    }

    match &config.reduce {
        ReduceMode::Off => {}
        ReduceMode::Builtin => reduce_queue_builtin(config, &table, &store)?,
        ReduceMode::External(cmd) => reduce_queue_external(config, cmd, &store)?,
    }
    Ok(summary)
}

fn worker_loop(
    worker: usize,
    config: &FuzzConfig,
    table: &SignatureTable,
    seeds: &[SeedFile],
    shared: &Shared,
    start: Instant,
    deadline: Option<Duration>,
) {
    let work_dir = config.out_dir.join(format!("work/w{worker}"));
    if std::fs::create_dir_all(&work_dir).is_err() {
        return;
    }
    let names = table.operator_names();
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        if let Some(limit) = deadline {
            if start.elapsed() >= limit {
                break;
            }
        }
        let ordinal = shared.walk_counter.fetch_add(1, Ordering::SeqCst);
        if let Some(max) = config.walks {
            if ordinal >= max {
                break;
            }
        }
        let (seed_ix, walk_seed) = draw_for_walk(config.rng_seed, ordinal as u64, seeds.len());
        let seed = &seeds[seed_ix];
        let Ok(doc) = FormulaDocument::parse(&seed.text, &names) else {
            continue;
        };
        let seed_path = seed.path.display().to_string();
        let stem = seed
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "seed".to_string());
        let mut choices = RandomChoices::from_seed(walk_seed);
        let sink = |step: usize,
                    mutant: &FormulaDocument,
                    event: &opfuzz_core::mutator::MutationEvent| {
            if shared.stop.load(Ordering::SeqCst) {
                return Err("interrupted".to_string());
            }
            let mutant_path = work_dir.join(format!("{stem}-{step}.smt2"));
            std::fs::write(&mutant_path, mutant.source()).map_err(|e| e.to_string())?;
            let o1 = run_solver(&config.solver1, &mutant_path).map_err(|e| e.to_string())?;
            let o2 = run_solver(&config.solver2, &mutant_path).map_err(|e| e.to_string())?;
            shared.mutants.fetch_add(1, Ordering::Relaxed);
            if !validate(&o1, &o2) {
                let (kind, culprit) = classify(&o1, &o2);
                let theory = theory_tag(mutant);
                let crash_outcome = [&o1, &o2]
                    .into_iter()
                    .find(|o| o.verdict == Verdict::Crash);
                let key = dedup_key(kind, &theory, crash_outcome);
                let trigger = BugTrigger {
                    kind,
                    culprit,
                    theory_tag: theory,
                    dedup_key: key,
                    seed_path: seed_path.clone(),
                    step,
                    rng_state_digest: event.rng_state_digest.clone(),
                    mutant_text: mutant.source().as_bytes().to_vec(),
                    outcomes: (o1, o2),
                };
                let mut store = shared.store.lock().expect("store lock");
                store.insert(trigger).map_err(|e| e.to_string())?;
            }
            // the trigger copy lives under triggers/; the scratch file goes
            let _ = std::fs::remove_file(&mutant_path);
            Ok(())
        };
        match fuzz_walk(&seed_path, &doc, config.n, table, &mut choices, sink) {
            Ok(result) => {
                if let Some(msg) = result.aborted {
                    if msg != "interrupted" {
                        eprintln!("warning: walk on {seed_path} aborted: {msg}");
                    }
                }
            }
            Err(e) => eprintln!("warning: walk on {seed_path} failed: {e}"),
        }
        shared.walks_done.fetch_add(1, Ordering::Relaxed);
    }
}

fn reduce_queue_builtin(
    config: &FuzzConfig,
    table: &SignatureTable,
    store: &TriggerStore,
) -> Result<()> {
    let triggers_dir = config.out_dir.join("triggers");
    for trigger in store.report_queue() {
        let text = String::from_utf8_lossy(&trigger.mutant_text).into_owned();
        let mut oracle = SolverPairOracle {
            s1: config.solver1.clone(),
            s2: config.solver2.clone(),
            table: table.clone(),
            scratch: config.out_dir.join("reduce-scratch.smt2"),
        };
        match reduce(&text, trigger.kind, &trigger.dedup_key, &mut oracle, DEFAULT_BUDGET) {
            Ok(result) => {
                let name = format!("{}.reduced.smt2", trigger_digest(trigger));
                std::fs::write(triggers_dir.join(&name), &result.reduced_text)?;
                println!(
                    "reduced {}: {} -> {} bytes ({} oracle runs)",
                    trigger.dedup_key, result.original_bytes, result.reduced_bytes, result.oracle_runs
                );
            }
            Err(e) => eprintln!("warning: reduction of {} failed: {e}", trigger.dedup_key),
        }
    }
    Ok(())
}

fn shell_quote(text: &str) -> String {
    format!("'{}'", text.replace('\'', r"'\''"))
}

/// Interestingness test for external reducers: exits 0 iff the candidate
/// still reproduces the trigger's kind and de-dup key.
pub fn interestingness_script(
    opfuzz_exe: &Path,
    config: &FuzzConfig,
    kind: &str,
    key: &str,
    target: &str,
) -> String {
    let s1 = shell_quote(&config.solver1.command.join(" "));
    let s2 = shell_quote(&config.solver2.command.join(" "));
    format!(
        "#!/bin/sh\n# regenerated interestingness test; exit 0 iff the bug still fires\nexec {} check \\\n  --solver1 {} --solver2 {} \\\n  --timeout {} --expect-kind {} --expect-key {} \\\n  \"${{1:-{}}}\"\n",
        shell_quote(&opfuzz_exe.display().to_string()),
        s1,
        s2,
        config.solver1.timeout_secs,
        shell_quote(kind),
        shell_quote(key),
        target,
    )
}

fn reduce_queue_external(config: &FuzzConfig, cmd: &str, store: &TriggerStore) -> Result<()> {
    use std::os::unix::fs::PermissionsExt;
    let triggers_dir = config.out_dir.join("triggers");
    let exe = std::env::current_exe().context("locating the fuzzer executable")?;
    for trigger in store.report_queue() {
        let digest = trigger_digest(trigger);
        let target = format!("{digest}.smt2");
        std::fs::write(triggers_dir.join(&target), &trigger.mutant_text)?;
        let script_name = format!("{digest}-interesting.sh");
        let script_path = triggers_dir.join(&script_name);
        let body = interestingness_script(
            &exe,
            config,
            trigger.kind.as_str(),
            &trigger.dedup_key,
            &target,
        );
        std::fs::write(&script_path, body)?;
        std::fs::set_permissions(&script_path, std::fs::Permissions::from_mode(0o755))?;
        let status = std::process::Command::new("sh")
            .arg("-c")
            .arg(format!("{cmd} {script_name} {target}"))
            .current_dir(&triggers_dir)
            .status();
        match status {
            Ok(s) if s.success() => {}
            Ok(s) => eprintln!("warning: external reducer exited with {s} on {digest}"),
            Err(e) => eprintln!("warning: external reducer failed on {digest}: {e}"),
        }
    }
    Ok(())
}
