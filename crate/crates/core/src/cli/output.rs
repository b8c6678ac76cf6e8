//! CSV tables, atomic file writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::config::RunConfig;
use super::CliError;

/// Float text with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// An in-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    /// Parses CSV text produced by [`Table::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| CliError::Io(e.to_string()))?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(|e| CliError::Io(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)?.into_iter().map(|s| s.parse().ok()).collect()
    }
}

/// Everything an experiment produces before it touches the filesystem.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// `(file name, table)` in write order.
    pub tables: Vec<(String, Table)>,
    /// Experiment-specific results for the manifest.
    pub results: Value,
    /// Choices the method leaves open, recorded verbatim.
    pub choices: Value,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn manifest(cfg: &RunConfig, out: &RunOutput, wall_seconds: f64) -> Value {
    let config: Map<String, Value> = cfg.pairs().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "wall_time_seconds": wall_seconds,
        "files": out.tables.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "artifact_choices": out.choices,
        "results": out.results,
    })
}

/// Writes all tables and `manifest.json` into the configured directory.
pub fn write_run(cfg: &RunConfig, out: &RunOutput, wall_seconds: f64) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    for (name, table) in &out.tables {
        write_atomic(&cfg.output_dir.join(name), table.to_csv()?.as_bytes())?;
    }
    let text =
        serde_json::to_string_pretty(&manifest(cfg, out, wall_seconds)).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&cfg.output_dir.join("manifest.json"), format!("{text}\n").as_bytes())
}

/// Reads the experiment name and configuration pairs back from a manifest.
pub fn read_manifest(path: &Path) -> Result<(String, Vec<(String, String)>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let exp = v["experiment"].as_str().ok_or_else(|| CliError::Config("manifest has no experiment".into()))?;
    let cfg = v["config"].as_object().ok_or_else(|| CliError::Config("manifest has no config".into()))?;
    let pairs = cfg
        .iter()
        .map(|(k, v)| {
            v.as_str()
                .map(|s| (k.clone(), s.to_string()))
                .ok_or_else(|| CliError::Config(format!("manifest config value for '{k}' is not a string")))
        })
        .collect::<Result<_, _>>()?;
    Ok((exp.to_string(), pairs))
}
