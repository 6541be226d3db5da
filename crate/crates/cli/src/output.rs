//! Atomic artifact writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'a str,
    config: &'a serde_json::Value,
    seeds: &'a serde_json::Value,
    inputs: &'a [FileDigest],
    outputs: Vec<FileDigest>,
    warnings: &'a [String],
    duration_seconds: f64,
}

/// Output directory that records every artifact written through it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    started: Instant,
    pub warnings: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new(), started: Instant::now(), warnings: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let target = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(|e| CliError::io(&self.root, e))?;
        fill(tmp.as_file_mut())?;
        tmp.as_file_mut().flush().map_err(|e| CliError::io(&target, e))?;
        tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(target)
    }

    /// Pretty JSON with `schema_version` merged in at the top level.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::config(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("schema_version".into(), SCHEMA_VERSION.into());
        }
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, &v).map_err(|e| CliError::config(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::io(Path::new(name), e))
        })
    }

    pub fn write_csv<F>(&mut self, name: &str, fill: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut csv::Writer<&mut dyn Write>) -> csv::Result<()>,
    {
        self.write_with(name, |w| {
            let mut writer = csv::Writer::from_writer(w);
            fill(&mut writer).and_then(|_| writer.flush().map_err(csv::Error::from)).map_err(|e| csv_error(name, e))
        })
    }

    pub fn finish(
        mut self,
        command: &str,
        config: &serde_json::Value,
        seeds: &serde_json::Value,
        inputs: &[FileDigest],
    ) -> CliResult<()> {
        let outputs = self
            .written
            .iter()
            .map(|name| Ok(FileDigest { path: name.clone(), sha256: sha256_file(&self.path(name))? }))
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            seeds,
            inputs,
            outputs,
            warnings: &self.warnings,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::config(e.to_string()))?;
        self.write_with(MANIFEST, |w| writeln!(w, "{text}").map_err(|e| CliError::io(Path::new(MANIFEST), e)))?;
        Ok(())
    }
}

fn csv_error(name: &str, e: csv::Error) -> CliError {
    CliError::io(Path::new(name), e)
}
