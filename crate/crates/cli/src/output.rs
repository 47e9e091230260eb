//! Output files, written atomically, and the per-command manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

/// Where every output came from.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub quick: bool,
    /// Named child seeds used by this command.
    pub seeds: BTreeMap<String, u64>,
    pub calibration_id: Option<String>,
}

impl Provenance {
    pub fn new(command: &'static str, cfg: &Config) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            quick: cfg.quick,
            seeds: BTreeMap::new(),
            calibration_id: None,
        }
    }

    pub fn seed(&mut self, name: impl Into<String>, value: u64) -> u64 {
        self.seeds.insert(name.into(), value);
        value
    }
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    provenance: &'a Provenance,
    config: &'a Config,
    files: &'a [FileEntry],
}

pub struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = write_atomic(&self.dir, name, bytes)?;
        self.files.push(FileEntry { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `<command>_manifest.json` listing every file with its digest.
    pub fn finish(mut self, provenance: &Provenance, cfg: &Config) -> Result<(), CliError> {
        let mut config = cfg.clone();
        config.out_dir = PathBuf::new();
        config.calibration.cache_dir = None;
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest { provenance, config: &config, files: &files };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir, &format!("{}_manifest.json", provenance.command), text.as_bytes())?;
        Ok(())
    }
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// CSV rendering into memory.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}
