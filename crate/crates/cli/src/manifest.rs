//! Output directories and their manifests. A manifest records what went in
//! (config snapshot, input digests) and what came out (artifact digests) so
//! any artifact can be traced to the run that made it. No timestamps or
//! absolute paths: identical runs give identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Raised when an output directory holds results from an earlier run.
#[derive(Debug)]
pub struct StaleOutput(pub String);

impl std::fmt::Display for StaleOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for StaleOutput {}

/// A directory being filled by one command.
#[derive(Debug)]
pub struct OutputDir {
    pub path: PathBuf,
    command: String,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
    summary: serde_json::Value,
}

impl OutputDir {
    /// Claims `path`. A directory from an earlier run is replaced only with
    /// `force`; a non-empty directory without a manifest is never touched.
    pub fn claim(path: &Path, command: &str, force: bool) -> Result<Self, StaleOutput> {
        if path.exists() {
            let non_empty = fs::read_dir(path)
                .map(|mut d| d.next().is_some())
                .map_err(|e| StaleOutput(format!("{}: {e}", path.display())))?;
            if non_empty {
                if !path.join(MANIFEST).exists() {
                    return Err(StaleOutput(format!(
                        "{} is not empty and has no {MANIFEST}; refusing to write into it",
                        path.display()
                    )));
                }
                if !force {
                    return Err(StaleOutput(format!(
                        "{} holds output from an earlier run; pass --force to replace it",
                        path.display()
                    )));
                }
                fs::remove_dir_all(path).map_err(|e| StaleOutput(format!("{}: {e}", path.display())))?;
            }
        }
        fs::create_dir_all(path).map_err(|e| StaleOutput(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            command: command.to_string(),
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            summary: serde_json::Value::Null,
        })
    }

    /// A nested stage directory inside a freshly claimed parent.
    pub fn child(&self, name: &str, command: &str) -> Result<Self> {
        let dir = Self::claim(&self.path.join(name), command, false).map_err(anyhow::Error::new)?;
        Ok(Self {
            config: self.config.clone(),
            ..dir
        })
    }

    pub fn set_config(&mut self, config: impl Serialize) {
        self.config = serde_json::to_value(config).expect("config serializes");
    }

    pub fn set_summary(&mut self, summary: impl Serialize) {
        self.summary = serde_json::to_value(summary).expect("summary serializes");
    }

    pub fn input(&mut self, label: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(label.into(), sha256_file(path)?);
        Ok(())
    }

    /// Digests every regular file in `dir`, labelled `<prefix>/<name>`.
    pub fn input_dir(&mut self, prefix: &str, dir: &Path) -> Result<()> {
        let mut names: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for p in names {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            self.input(format!("{prefix}/{name}"), &p)?;
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Records a file already written under this directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let digest = sha256_file(&self.file(name))?;
        self.artifacts.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        if let Some(parent) = self.file(name).parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(self.file(name), text).with_context(|| format!("writing {name}"))?;
        self.record(name)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes the manifest. On failure the partial artifacts stay in place.
    pub fn finish<T>(self, outcome: &Result<T>) -> Result<PathBuf> {
        let (status, error) = match outcome {
            Ok(_) => (Status::Ok, None),
            Err(e) => (Status::Failed, Some(format!("{e:#}"))),
        };
        let manifest = Manifest {
            tool: "ten",
            version: TOOL_VERSION,
            command: self.command,
            status,
            error,
            config: self.config,
            inputs: self.inputs,
            artifacts: self.artifacts,
            summary: self.summary,
        };
        let path = self.path.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
