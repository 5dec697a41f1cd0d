use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the resolved settings, ignoring where output goes and how many
/// threads run. Input files enter by content, not by path.
pub fn config_hash(config: &serde_json::Value) -> String {
    let mut v = config.clone();
    if let Some(map) = v.as_object_mut() {
        for key in ["out", "config", "threads"] {
            map.remove(key);
        }
        for value in map.values_mut() {
            by_content(value);
        }
    }
    sha256_hex(v.to_string().as_bytes())
}

fn by_content(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::String(s) if Path::new(s.as_str()).is_file() => {
            if let Ok(h) = file_sha256(Path::new(s.as_str())) {
                *value = serde_json::Value::String(format!("sha256:{h}"));
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(by_content),
        _ => {}
    }
}

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// Collects inputs and outputs of one command, then writes `manifest.json`
/// next to the outputs.
pub struct Run {
    pub out: PathBuf,
    pub hash: String,
    command: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run {
            out: out.to_path_buf(),
            hash: config_hash(&config),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.outputs.push(p.clone());
        p
    }

    /// Writes a text artifact whose first line carries the config hash.
    pub fn write_text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.output(name);
        fs::write(&p, format!("# config_hash {}\n{body}", self.hash)).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let record = |paths: &[PathBuf]| -> Result<Vec<FileRecord>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileRecord {
                        path: p.clone(),
                        sha256: file_sha256(p)?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            tool: "edisc",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            seed: self.seed,
            config_hash: self.hash.clone(),
            config: self.config.clone(),
            inputs: record(&self.inputs)?,
            outputs: record(&self.outputs)?,
        };
        let p = self.out.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(p)
    }
}
