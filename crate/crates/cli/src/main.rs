mod config;
mod fuzz;
mod seed_scan;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use num_traits::ToPrimitive;
use opfuzz_core::mutator::{ChoiceSource, RandomChoices, ScriptedChoices};
use opfuzz_core::oracle::BugKind;
use opfuzz_core::reducer::{reduce, SolverPairOracle, DEFAULT_BUDGET};
use opfuzz_core::runner::DEFAULT_TIMEOUT_SECS;
use opfuzz_core::tracesim::{sim, Trace};
use opfuzz_core::typing::SignatureTable;
use opfuzz_core::{type_aware_mutate, FormulaDocument, SolverSpec};

use config::{ConfigFile, ReduceMode, RunFlags};

#[derive(Parser)]
#[command(
    name = "opfuzz",
    about = "Differential SMT solver fuzzer driven by type-aware operator mutation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuzz two solvers against each other
    Run {
        /// TOML config file; command-line flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed directories (recursive .smt2 discovery)
        #[arg(long, num_args = 1..)]
        seeds: Option<Vec<PathBuf>>,
        /// First solver command template, e.g. "z3 -smt2 {}"
        #[arg(long)]
        solver1: Option<String>,
        /// Second solver command template
        #[arg(long)]
        solver2: Option<String>,
        /// Chained mutations per seed walk
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        rng_seed: Option<u64>,
        /// Per-solver timeout in seconds
        #[arg(long)]
        timeout: Option<u64>,
        /// Output directory (trigger store, work files)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many seconds
        #[arg(long)]
        max_runtime: Option<u64>,
        /// Stop after this many seed walks
        #[arg(long)]
        walks: Option<usize>,
        /// off | builtin | external:<cmd>
        #[arg(long)]
        reduce: Option<String>,
        /// Extra operator-table files
        #[arg(long = "table-extension", num_args = 1..)]
        table_extensions: Option<Vec<PathBuf>>,
    },
    /// Apply chained mutations to one seed and print the result
    Mutate {
        seed: PathBuf,
        /// Number of mutation steps (ignored when --force is given)
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Force specific steps as occurrence:operator, e.g. --force 2:=
        #[arg(long, num_args = 1..)]
        force: Option<Vec<String>>,
        #[arg(long = "table-extension", num_args = 1..)]
        table_extensions: Option<Vec<PathBuf>>,
        /// Print the mutation events to stderr
        #[arg(long)]
        verbose: bool,
    },
    /// Similarity of solver traces against the seed trace, as CSV
    Tracesim {
        /// Directory with layout <seed>/<step>.trace; 0.trace is the seed
        traces: PathBuf,
    },
    /// Shrink a bug-triggering script while keeping the same bug
    Reduce {
        input: PathBuf,
        #[arg(long)]
        solver1: String,
        #[arg(long)]
        solver2: String,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
        timeout: u64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        /// Write an interestingness shell script here instead of reducing
        #[arg(long)]
        emit_script: Option<PathBuf>,
        /// Write the reduced script here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inventory of a seed corpus
    Seeds {
        dirs: Vec<PathBuf>,
        #[arg(long = "table-extension", num_args = 1..)]
        table_extensions: Option<Vec<PathBuf>>,
    },
    /// Exit 0 iff the script reproduces the expected bug (used by
    /// generated interestingness tests)
    Check {
        input: PathBuf,
        #[arg(long)]
        solver1: String,
        #[arg(long)]
        solver2: String,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
        timeout: u64,
        #[arg(long)]
        expect_kind: String,
        #[arg(long)]
        expect_key: String,
    },
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_sigint_handler() {
    unsafe {
        let handler = on_sigint as extern "C" fn(libc::c_int) as usize as libc::sighandler_t;
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

fn load_table(extensions: &Option<Vec<PathBuf>>) -> Result<SignatureTable> {
    let mut table = SignatureTable::core();
    for path in extensions.iter().flatten() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading operator table {}", path.display()))?;
        table
            .extend_from_str(&text, &path.display().to_string())
            .with_context(|| format!("parsing operator table {}", path.display()))?;
    }
    Ok(table)
}

fn parse_forced(raw: &[String]) -> Result<Vec<(usize, String)>> {
    raw.iter()
        .map(|item| {
            let Some((occ, op)) = item.split_once(':') else {
                bail!("--force expects occurrence:operator, got {item:?}");
            };
            let occ: usize = occ
                .parse()
                .with_context(|| format!("bad occurrence id in {item:?}"))?;
            if op.is_empty() {
                bail!("--force expects occurrence:operator, got {item:?}");
            }
            Ok((occ, op.to_string()))
        })
        .collect()
}

fn cmd_mutate(
    seed: &PathBuf,
    n: usize,
    rng_seed: u64,
    force: Option<Vec<String>>,
    table_extensions: Option<Vec<PathBuf>>,
    verbose: bool,
) -> Result<()> {
    let table = load_table(&table_extensions)?;
    let text = std::fs::read_to_string(seed)
        .with_context(|| format!("reading seed {}", seed.display()))?;
    let mut doc = FormulaDocument::parse(&text, &table.operator_names())
        .with_context(|| format!("parsing seed {}", seed.display()))?;
    let mut choices: Box<dyn ChoiceSource> = match &force {
        Some(raw) => Box::new(ScriptedChoices::new(parse_forced(raw)?)),
        None => Box::new(RandomChoices::from_seed(rng_seed)),
    };
    let steps = force.as_ref().map_or(n, |raw| raw.len());
    for step in 1..=steps {
        let (mutant, event) = type_aware_mutate(&doc, &table, choices.as_mut(), step)?;
        if verbose {
            eprintln!(
                "step {step}: occurrence {} {} -> {}",
                event.occurrence_id, event.old_operator, event.new_operator
            );
        }
        doc = mutant;
    }
    print!("{}", doc.source());
    Ok(())
}

fn cmd_tracesim(traces: &PathBuf) -> Result<()> {
    let mut seed_dirs: Vec<PathBuf> = std::fs::read_dir(traces)
        .with_context(|| format!("reading {}", traces.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    seed_dirs.sort();
    println!("seed,step,similarity");
    for dir in seed_dirs {
        let seed_name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let seed_trace_path = dir.join("0.trace");
        let seed_trace = Trace::from_text(
            &std::fs::read_to_string(&seed_trace_path)
                .with_context(|| format!("reading seed trace {}", seed_trace_path.display()))?,
        );
        let mut steps: Vec<(usize, PathBuf)> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let path = e.path();
                let stem = path.file_stem()?.to_str()?.parse::<usize>().ok()?;
                (path.extension()?.to_str()? == "trace" && stem > 0).then_some((stem, path))
            })
            .collect();
        steps.sort();
        for (step, path) in steps {
            let trace = Trace::from_text(&std::fs::read_to_string(&path)?);
            match sim(&seed_trace, &trace) {
                Ok(s) => {
                    let value = s.to_f64().unwrap_or(f64::NAN);
                    println!("{seed_name},{step},{value:.6}");
                }
                // both traces empty: no similarity defined
                Err(_) => println!("{seed_name},{step},"),
            }
        }
    }
    Ok(())
}

fn probe_identity(
    input: &PathBuf,
    solver1: &str,
    solver2: &str,
    timeout: u64,
) -> Result<Option<(BugKind, String)>> {
    let oracle = SolverPairOracle {
        s1: SolverSpec::from_template("solver1", solver1, timeout)?,
        s2: SolverSpec::from_template("solver2", solver2, timeout)?,
        table: SignatureTable::core(),
        scratch: std::env::temp_dir().join(format!("opfuzz-check-{}.smt2", std::process::id())),
    };
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let result = oracle.probe_pair(&text)?;
    let _ = std::fs::remove_file(&oracle.scratch);
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn cmd_reduce(
    input: &PathBuf,
    solver1: &str,
    solver2: &str,
    timeout: u64,
    budget: usize,
    emit_script: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let Some((kind, key)) = probe_identity(input, solver1, solver2, timeout)? else {
        bail!("input does not trigger a verdict difference; nothing to reduce");
    };
    if let Some(script_path) = emit_script {
        let config = config::FuzzConfig {
            seeds: vec![],
            solver1: SolverSpec::from_template("solver1", solver1, timeout)?,
            solver2: SolverSpec::from_template("solver2", solver2, timeout)?,
            n: 1,
            workers: 1,
            rng_seed: 0,
            out_dir: PathBuf::from("."),
            max_runtime_secs: None,
            walks: None,
            reduce: ReduceMode::Off,
            table_extensions: vec![],
        };
        let exe = std::env::current_exe().context("locating the fuzzer executable")?;
        let body = fuzz::interestingness_script(
            &exe,
            &config,
            kind.as_str(),
            &key,
            &input.display().to_string(),
        );
        std::fs::write(&script_path, body)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&script_path, std::fs::Permissions::from_mode(0o755))?;
        }
        eprintln!("wrote interestingness test to {}", script_path.display());
        return Ok(());
    }
    let text = std::fs::read_to_string(input)?;
    let mut oracle = SolverPairOracle {
        s1: SolverSpec::from_template("solver1", solver1, timeout)?,
        s2: SolverSpec::from_template("solver2", solver2, timeout)?,
        table: SignatureTable::core(),
        scratch: std::env::temp_dir().join(format!("opfuzz-reduce-{}.smt2", std::process::id())),
    };
    let result = reduce(&text, kind, &key, &mut oracle, budget)?;
    let _ = std::fs::remove_file(&oracle.scratch);
    eprintln!(
        "{} -> {} bytes in {} iterations ({} oracle runs)",
        result.original_bytes, result.reduced_bytes, result.iterations, result.oracle_runs
    );
    match out {
        Some(path) => std::fs::write(path, &result.reduced_text)?,
        None => print!("{}", result.reduced_text),
    }
    Ok(())
}

fn cmd_check(
    input: &PathBuf,
    solver1: &str,
    solver2: &str,
    timeout: u64,
    expect_kind: &str,
    expect_key: &str,
) -> Result<bool> {
    Ok(match probe_identity(input, solver1, solver2, timeout)? {
        Some((kind, key)) => kind.as_str() == expect_kind && key == expect_key,
        None => false,
    })
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seeds,
            solver1,
            solver2,
            n,
            workers,
            rng_seed,
            timeout,
            out,
            max_runtime,
            walks,
            reduce,
            table_extensions,
        } => {
            let file = match config {
                Some(path) => ConfigFile::load(&path)?,
                None => ConfigFile::default(),
            };
            let flags = RunFlags {
                seeds,
                solver1,
                solver2,
                n,
                workers,
                rng_seed,
                timeout,
                out,
                max_runtime,
                walks,
                reduce,
                table_extensions,
            };
            let config = config::merge(flags, file)?;
            install_sigint_handler();
            let stop = Arc::new(AtomicBool::new(false));
            let stop_watch = stop.clone();
            std::thread::spawn(move || loop {
                if INTERRUPTED.load(Ordering::SeqCst) {
                    stop_watch.store(true, Ordering::SeqCst);
                    break;
                }
                std::thread::sleep(std::time::Duration::from_millis(20));
            });
            let summary = fuzz::fuzz_main(&config, stop)?;
            summary.print();
            Ok(if summary.triggers > 0 {
                ExitCode::from(10)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Mutate {
            seed,
            n,
            rng_seed,
            force,
            table_extensions,
            verbose,
        } => {
            cmd_mutate(&seed, n, rng_seed, force, table_extensions, verbose)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Tracesim { traces } => {
            cmd_tracesim(&traces)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Reduce {
            input,
            solver1,
            solver2,
            timeout,
            budget,
            emit_script,
            out,
        } => {
            cmd_reduce(&input, &solver1, &solver2, timeout, budget, emit_script, out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Seeds {
            dirs,
            table_extensions,
        } => {
            if dirs.is_empty() {
                bail!("no seed directory given");
            }
            let table = load_table(&table_extensions)?;
            let inventory = seed_scan::seed_scan(&dirs, &table);
            seed_scan::print_inventory(&inventory);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            input,
            solver1,
            solver2,
            timeout,
            expect_kind,
            expect_key,
        } => Ok(
            if cmd_check(&input, &solver1, &solver2, timeout, &expect_kind, &expect_key)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            },
        ),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // configuration and usage problems
            ExitCode::from(2)
        }
    }
}
