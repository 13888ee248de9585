//! Output files of a command and their checksum manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CHECKSUMS: &str = "checksums.sha256";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects the files a command writes below its output directory.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Registers a file written by other means.
    pub fn record(&mut self, path: PathBuf) {
        if !self.written.contains(&path) {
            self.written.push(path);
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        self.record(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// One header row from the field names of `T`, then one row per record.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.record(path.clone());
        Ok(path)
    }

    /// Streams into `name` through `f`.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?);
        f(&mut w)?;
        w.flush()?;
        self.record(path.clone());
        Ok(path)
    }

    /// Updates `checksums.sha256` (the `sha256sum` format) with every file
    /// written so far; entries of earlier commands are kept.
    pub fn finish(self) -> Result<PathBuf> {
        let manifest = self.dir.join(CHECKSUMS);
        let mut entries = BTreeMap::new();
        if let Ok(text) = std::fs::read_to_string(&manifest) {
            for line in text.lines() {
                if let Some((sum, name)) = line.split_once("  ") {
                    entries.insert(name.to_string(), sum.to_string());
                }
            }
        }
        for path in &self.written {
            let rel = path.strip_prefix(&self.dir).unwrap_or(path);
            entries.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(path)?);
        }
        let text: String = entries.iter().map(|(name, sum)| format!("{sum}  {name}\n")).collect();
        std::fs::write(&manifest, text)?;
        Ok(manifest)
    }
}

/// Parses a `checksums.sha256` manifest into `(file, digest)` pairs.
pub fn read_checksums(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once("  "))
        .map(|(sum, name)| (name.to_string(), sum.to_string()))
        .collect())
}
