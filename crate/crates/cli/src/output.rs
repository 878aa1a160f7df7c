//! Output file naming, per-seed manifests and the merged metrics table.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Names every file after the subcommand, the config hash and, for per-seed
/// files, the seed.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub dir: PathBuf,
    pub command: &'static str,
    pub hash: String,
}

impl OutputLayout {
    pub fn new(dir: &Path, command: &'static str, hash: String) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputLayout { dir: dir.to_path_buf(), command, hash })
    }

    pub fn seed_file(&self, seed: u64, part: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}_{}_seed{seed}_{part}.{ext}", self.command, self.hash))
    }

    pub fn manifest(&self, seed: u64) -> PathBuf {
        self.dir.join(format!("{}_{}_seed{seed}_manifest.json", self.command, self.hash))
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join(format!("{}_{}_metrics.csv", self.command, self.hash))
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join(format!("{}_{}_config.toml", self.command, self.hash))
    }
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    let file = File::create(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Metric rows of one seed: a condition name and one value per column.
#[derive(Debug, Clone, Default)]
pub struct SeedMetrics {
    pub rows: Vec<(String, Vec<f64>)>,
}

impl SeedMetrics {
    pub fn push(&mut self, condition: impl Into<String>, values: Vec<f64>) {
        self.rows.push((condition.into(), values));
    }
}

/// Writes `seed,condition,<columns>` with seeds in the given order.
pub fn write_metrics(path: &Path, columns: &[&str], per_seed: &[(u64, SeedMetrics)]) -> Result<(), CliError> {
    write_file(path, |out| {
        writeln!(out, "seed,condition,{}", columns.join(","))?;
        for (seed, m) in per_seed {
            for (cond, values) in &m.rows {
                let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{seed},{cond},{}", vals.join(","))?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub config_hash: &'a str,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub version: &'a str,
    pub consensus_weights: &'a str,
}

pub fn write_manifest(path: &Path, manifest: &Manifest<'_>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
