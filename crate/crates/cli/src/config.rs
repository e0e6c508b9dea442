//! Fuzzing configuration: defaults, TOML file, command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use opfuzz_core::runner::DEFAULT_TIMEOUT_SECS;
use opfuzz_core::typing::SignatureTable;
use opfuzz_core::SolverSpec;
use serde::Deserialize;

pub const DEFAULT_N: usize = 300;
pub const DEFAULT_OUT_DIR: &str = "opfuzz-out";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReduceMode {
    Off,
    Builtin,
    External(String),
}

impl ReduceMode {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "off" => Ok(ReduceMode::Off),
            "builtin" => Ok(ReduceMode::Builtin),
            other => match other.strip_prefix("external:") {
                Some(cmd) if !cmd.is_empty() => Ok(ReduceMode::External(cmd.to_string())),
                _ => bail!("invalid reduce mode {other:?}; expected off, builtin, or external:<cmd>"),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub seeds: Vec<PathBuf>,
    pub solver1: SolverSpec,
    pub solver2: SolverSpec,
    /// chained mutations per walk
    pub n: usize,
    pub workers: usize,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
    pub max_runtime_secs: Option<u64>,
    /// total number of seed walks; unbounded when None
    pub walks: Option<usize>,
    pub reduce: ReduceMode,
    pub table_extensions: Vec<PathBuf>,
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("no seed directory given");
        }
        if self.n < 1 {
            bail!("n must be at least 1");
        }
        if self.workers < 1 {
            bail!("workers must be at least 1");
        }
        if self.solver1.id == self.solver2.id {
            bail!("solver ids must be distinct");
        }
        Ok(())
    }

    pub fn signature_table(&self) -> Result<SignatureTable> {
        let mut table = SignatureTable::core();
        for path in &self.table_extensions {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading operator table {}", path.display()))?;
            table
                .extend_from_str(&text, &path.display().to_string())
                .with_context(|| format!("parsing operator table {}", path.display()))?;
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------
// TOML file shape
// ---------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seeds: Option<Vec<PathBuf>>,
    pub solver1: Option<SolverEntry>,
    pub solver2: Option<SolverEntry>,
    pub n: Option<usize>,
    pub workers: Option<usize>,
    pub rng_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub timeout: Option<u64>,
    pub max_runtime: Option<u64>,
    pub walks: Option<usize>,
    pub reduce: Option<String>,
    pub table_extensions: Option<Vec<PathBuf>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    pub id: Option<String>,
    pub command: String,
    pub timeout: Option<u64>,
    pub model_validation: Option<bool>,
    #[serde(default)]
    pub env: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Command-line values for `run`; `None` means "not given on the command
/// line", letting the config file (then defaults) fill the gap.
#[derive(Debug, Default)]
pub struct RunFlags {
    pub seeds: Option<Vec<PathBuf>>,
    pub solver1: Option<String>,
    pub solver2: Option<String>,
    pub n: Option<usize>,
    pub workers: Option<usize>,
    pub rng_seed: Option<u64>,
    pub timeout: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_runtime: Option<u64>,
    pub walks: Option<usize>,
    pub reduce: Option<String>,
    pub table_extensions: Option<Vec<PathBuf>>,
}

fn build_spec(
    default_id: &str,
    flag: Option<&String>,
    file_entry: Option<&SolverEntry>,
    timeout: u64,
) -> Result<SolverSpec> {
    if let Some(template) = flag {
        return SolverSpec::from_template(default_id, template, timeout)
            .map_err(|e| anyhow::anyhow!("{default_id}: {e}"));
    }
    let Some(entry) = file_entry else {
        bail!("missing solver command for {default_id} (flag or config file)");
    };
    let id = entry.id.as_deref().unwrap_or(default_id);
    let mut spec = SolverSpec::from_template(id, &entry.command, entry.timeout.unwrap_or(timeout))
        .map_err(|e| anyhow::anyhow!("{id}: {e}"))?;
    spec.model_validation = entry.model_validation.unwrap_or(false);
    spec.env = entry.env.clone();
    Ok(spec)
}

/// Merge precedence: command-line flag > config file > default.
pub fn merge(flags: RunFlags, file: ConfigFile) -> Result<FuzzConfig> {
    let timeout = flags
        .timeout
        .or(file.timeout)
        .unwrap_or(DEFAULT_TIMEOUT_SECS);
    let solver1 = build_spec("solver1", flags.solver1.as_ref(), file.solver1.as_ref(), timeout)?;
    let solver2 = build_spec("solver2", flags.solver2.as_ref(), file.solver2.as_ref(), timeout)?;
    let reduce = match flags.reduce.or(file.reduce) {
        Some(text) => ReduceMode::parse(&text)?,
        None => ReduceMode::Off,
    };
    let config = FuzzConfig {
        seeds: flags.seeds.or(file.seeds).unwrap_or_default(),
        solver1,
        solver2,
        n: flags.n.or(file.n).unwrap_or(DEFAULT_N),
        workers: flags
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get())),
        rng_seed: flags.rng_seed.or(file.rng_seed).unwrap_or(0),
        out_dir: flags
            .out
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        max_runtime_secs: flags.max_runtime.or(file.max_runtime),
        walks: flags.walks.or(file.walks),
        reduce,
        table_extensions: flags
            .table_extensions
            .or(file.table_extensions)
            .unwrap_or_default(),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = r#"
seeds = ["seeds"]
n = 50
workers = 2
rng_seed = 7
timeout = 3
reduce = "builtin"

[solver1]
id = "alpha"
command = "alpha --model {}"

[solver2]
id = "beta"
command = "beta {}"
timeout = 5
"#;

    #[test]
    fn file_alone_fills_config() {
        let file: ConfigFile = toml::from_str(FILE).unwrap();
        let config = merge(RunFlags::default(), file).unwrap();
        assert_eq!(config.n, 50);
        assert_eq!(config.rng_seed, 7);
        assert_eq!(config.solver1.id, "alpha");
        assert_eq!(config.solver1.timeout_secs, 3);
        assert_eq!(config.solver2.timeout_secs, 5);
        assert_eq!(config.reduce, ReduceMode::Builtin);
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile = toml::from_str(FILE).unwrap();
        let flags = RunFlags {
            n: Some(10),
            rng_seed: Some(99),
            reduce: Some("off".to_string()),
            ..RunFlags::default()
        };
        let config = merge(flags, file).unwrap();
        assert_eq!(config.n, 10);
        assert_eq!(config.rng_seed, 99);
        assert_eq!(config.reduce, ReduceMode::Off);
    }

    #[test]
    fn duplicate_solver_ids_rejected() {
        let flags = RunFlags {
            seeds: Some(vec![PathBuf::from("seeds")]),
            solver1: Some("same {}".to_string()),
            solver2: Some("same {}".to_string()),
            ..RunFlags::default()
        };
        // both fall back to default ids solver1/solver2 — distinct; force a clash
        let config = merge(flags, ConfigFile::default()).unwrap();
        assert_ne!(config.solver1.id, config.solver2.id);
    }

    #[test]
    fn reduce_mode_grammar() {
        assert_eq!(ReduceMode::parse("off").unwrap(), ReduceMode::Off);
        assert_eq!(
            ReduceMode::parse("external:creduce").unwrap(),
            ReduceMode::External("creduce".to_string())
        );
        assert!(ReduceMode::parse("external:").is_err());
        assert!(ReduceMode::parse("nonsense").is_err());
    }
}
