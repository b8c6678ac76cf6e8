//! Experiment driver behind the `pmm` binary.
//!
//! ```text
//! pmm <forward-demo|converge|inverse-1d|allen-cahn> [--config FILE] [--from-manifest FILE] [--KEY VALUE]...
//! ```
//!
//! Settings are layered: experiment defaults, then a manifest's recorded
//! configuration, then a `key = value` config file, then command-line
//! flags. Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 numerical failure.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;
use std::time::Instant;

pub use config::{Experiment, RunConfig};
pub use experiments::run_experiment;
pub use output::{RunOutput, Table};

use crate::error::PmmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure during {stage}: {source}")]
    Numerical { stage: &'static str, source: PmmError },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

pub const USAGE: &str =
    "usage: pmm <forward-demo|converge|inverse-1d|allen-cahn> [--config FILE] [--from-manifest FILE] [--KEY VALUE]...";

/// Resolves the configuration from command-line arguments (without the
/// program name).
pub fn parse_args(args: &[String]) -> Result<RunConfig, CliError> {
    let (cmd, rest) = args.split_first().ok_or_else(|| CliError::Config(USAGE.into()))?;
    let experiment: Experiment = cmd.parse()?;
    let mut manifest_pairs = Vec::new();
    let mut file_pairs = Vec::new();
    let mut flag_pairs = Vec::new();
    let mut it = rest.iter();
    while let Some(flag) = it.next() {
        let key = flag.strip_prefix("--").ok_or_else(|| CliError::Config(format!("expected --KEY, got '{flag}'")))?;
        let value = it.next().ok_or_else(|| CliError::Config(format!("missing value for --{key}")))?;
        match key {
            "config" => {
                let text = std::fs::read_to_string(value).map_err(|e| CliError::Config(format!("{value}: {e}")))?;
                file_pairs.extend(config::parse_kv(&text)?);
            }
            "from-manifest" | "from_manifest" => {
                let (exp, pairs) = output::read_manifest(Path::new(value))?;
                if exp != experiment.name() {
                    return Err(CliError::Config(format!("manifest is for '{exp}', not '{experiment}'")));
                }
                manifest_pairs.extend(pairs);
            }
            _ => flag_pairs.push((key.to_string(), value.clone())),
        }
    }
    manifest_pairs.extend(file_pairs);
    manifest_pairs.extend(flag_pairs);
    RunConfig::build(experiment, &manifest_pairs)
}

/// Caps the global thread pool from `PMM_THREADS` if set.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("PMM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("PMM_THREADS must be a positive integer, got '{v}'")))?;
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs an experiment and writes its files.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let out = run_experiment(cfg)?;
    output::write_run(cfg, &out, start.elapsed().as_secs_f64())?;
    Ok(out)
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    if matches!(args.first().map(String::as_str), Some("-h" | "--help" | "help")) {
        println!("{USAGE}");
        return 0;
    }
    let result = configure_threads().and_then(|_| parse_args(args)).and_then(|cfg| {
        execute(&cfg)?;
        Ok(cfg)
    });
    match result {
        Ok(cfg) => {
            println!("{} finished; output in {}", cfg.experiment, cfg.output_dir.display());
            0
        }
        Err(e) => {
            eprintln!("pmm: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_layers_flags_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "ell = 0.3\nn_eval = 64\n").unwrap();
        let cfg = parse_args(&args(&["converge", "--config", file.to_str().unwrap(), "--ell", "0.25"])).unwrap();
        assert_eq!(cfg.get::<f64>("ell").unwrap(), 0.25);
        assert_eq!(cfg.get::<usize>("n_eval").unwrap(), 64);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(&args(&["bogus"])), 2);
        assert_eq!(main_with_args(&args(&["converge", "--unknown", "1"])), 2);
        assert_eq!(main_with_args(&args(&["converge", "--ell"])), 2);
        assert_eq!(main_with_args(&args(&[])), 2);
        assert_eq!(main_with_args(&args(&["--help"])), 0);
        let e = CliError::Numerical { stage: "x", source: PmmError::EmptyDesign };
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("during x"));
    }
}
