use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Record written next to a command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub duration_secs: f64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config: serde_json::to_value(config).unwrap_or(Value::Null),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                duration_secs: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.manifest
            .inputs
            .insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn output(mut self, name: &str, path: &Path) -> Self {
        self.manifest
            .outputs
            .insert(name.to_string(), path.to_path_buf());
        self
    }

    /// Writes `<dir>/<command>.manifest.json`.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.manifest.json", self.manifest.command));
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
