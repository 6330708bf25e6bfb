//! Output directory layout and per-command manifests.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const COHORT: &str = "cohort.jsonl";
pub const MANIFESTS: &str = "manifests";

pub fn model_dir(name: &str) -> String {
    format!("models/{name}")
}

pub fn predictions(name: &str) -> String {
    format!("predictions/{name}.csv")
}

pub const AUC: &str = "evaluation/auc.csv";
pub const CORRELATION: &str = "evaluation/correlation.csv";
pub const CURVES: &str = "contraction/curves.csv";
pub const COUNTERFACTUAL: &str = "contraction/counterfactual.csv";
pub const ABROCA: &str = "fairness/abroca.csv";
pub const FAIRNESS_TESTS: &str = "fairness/tests.csv";
pub const ECON_GRID: &str = "econ/grid.csv";
pub const ECON_SUMMARY: &str = "econ/summary.csv";

/// One resolved run: configuration, output root and config hash.
pub struct Run {
    pub config: RunConfig,
    pub root: PathBuf,
    pub hash: String,
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    precision: &'a str,
    admitsim_version: &'a str,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { context: path.display().to_string(), source }
}

impl Run {
    pub fn new(config: RunConfig, root: PathBuf) -> Self {
        let hash = config.hash();
        Run { config, root, hash }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path of an upstream artifact, or a missing-dependency error naming it.
    pub fn require(&self, rel: &str, producer: &'static str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::Missing { path: p, producer })
        }
    }

    /// Creates the parent directories of `rel` and returns its full path.
    pub fn prepare(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        Ok(p)
    }

    /// Writes `rel` through a buffered writer.
    pub fn write_with(&self, rel: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<String> {
        let p = self.prepare(rel)?;
        let mut w = BufWriter::new(File::create(&p).map_err(|e| io_err(&p, e))?);
        f(&mut w)?;
        w.flush().map_err(|e| io_err(&p, e))?;
        Ok(rel.to_string())
    }

    /// All files under the directory `rel`, as sorted relative paths.
    pub fn files_under(&self, rel: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let dir = self.path(rel);
        for entry in std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let child = format!("{rel}/{name}");
            if entry.path().is_dir() {
                out.extend(self.files_under(&child)?);
            } else {
                out.push(child);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Records inputs and outputs of `command` with their hashes, together
    /// with the resolved configuration.
    pub fn finish(&self, command: &str, inputs: &[String], outputs: &[String]) -> Result<()> {
        let entries = |paths: &[String]| -> Result<Vec<FileEntry>> {
            let mut v: Vec<&String> = paths.iter().collect();
            v.sort();
            v.dedup();
            v.into_iter()
                .map(|p| Ok(FileEntry { path: p.clone(), sha256: sha256_file(&self.path(p))? }))
                .collect()
        };
        let manifest = Manifest {
            command,
            config_hash: &self.hash,
            seed: self.config.seed,
            precision: self.config.models.precision.name(),
            admitsim_version: env!("CARGO_PKG_VERSION"),
            inputs: entries(inputs)?,
            outputs: entries(outputs)?,
        };
        let text = format!("{}\n", serde_json::to_string_pretty(&manifest)?);
        let rel = format!("{MANIFESTS}/{command}.json");
        self.write_with(&rel, |w| Ok(w.write_all(text.as_bytes())?))?;
        // The stored configuration is relocatable: it omits the output path.
        let config = RunConfig { output_dir: None, ..self.config.clone() }.to_toml()?;
        self.write_with(&format!("{MANIFESTS}/config.toml"), |w| Ok(w.write_all(config.as_bytes())?))?;
        log::info!("{command}: {} outputs, config {}", outputs.len(), self.hash);
        Ok(())
    }
}
