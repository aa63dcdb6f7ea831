use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written into every run directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: &'static str,
    pub revision: &'static str,
    pub created_unix: u64,
    pub hardware: String,
    pub parallel_feature: bool,
    pub seeds: serde_json::Value,
    pub config: serde_json::Value,
    pub out_dir: PathBuf,
    /// Files produced, relative to `out_dir`.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], out_dir: &Path) -> Self {
        Self {
            command: command.to_owned(),
            argv: argv.to_vec(),
            version: env!("CARGO_PKG_VERSION"),
            revision: option_env!("CRYPTOGRAM_REVISION").unwrap_or("unknown"),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            hardware: cryptogram::analysis::hardware_string(),
            parallel_feature: cryptogram::exec::Execution::Parallel.is_parallel(),
            seeds: serde_json::Value::Null,
            config: serde_json::Value::Null,
            out_dir: out_dir.to_owned(),
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn write(&self) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}
