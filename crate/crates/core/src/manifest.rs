//! Run manifests: what was run, with which inputs, producing which files.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::parse_kv;

/// `<command>.manifest`, so commands sharing a directory keep separate records.
pub fn manifest_file(command: &str) -> String {
    format!("{command}.manifest")
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest: {0}")]
    Malformed(String),
    #[error("artifact {name} missing from {dir}")]
    Missing { name: String, dir: PathBuf },
    #[error("artifact {name} checksum mismatch: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        name: String,
        expected: String,
        actual: String,
    },
}

pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let mut file = std::fs::File::open(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub version: String,
    /// `(file name relative to the output directory, sha256)`, sorted by name.
    pub artifacts: Vec<(String, String)>,
    /// Flags and other inputs needed to rerun the command.
    pub parameters: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_path: None,
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            artifacts: Vec::new(),
            parameters: Vec::new(),
        }
    }

    pub fn parameter(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.push((key.to_string(), value.to_string()));
        self
    }

    /// Hashes each named file under `dir`.
    pub fn with_artifacts(mut self, dir: &Path, names: &[&str]) -> Result<Self, ManifestError> {
        for name in names {
            let path = dir.join(name);
            if !path.exists() {
                return Err(ManifestError::Missing {
                    name: name.to_string(),
                    dir: dir.to_path_buf(),
                });
            }
            self.artifacts.push((name.to_string(), sha256_file(&path)?));
        }
        self.artifacts.sort();
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        if let Some(c) = &self.config_path {
            let _ = writeln!(out, "config={c}");
        }
        if let Some(s) = self.seed {
            let _ = writeln!(out, "seed={s}");
        }
        let _ = writeln!(out, "version={}", self.version);
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "param.{k}={v}");
        }
        for (name, sum) in &self.artifacts {
            let _ = writeln!(out, "artifact.{name}={sum}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let kv = parse_kv(text).map_err(|e| ManifestError::Malformed(e.to_string()))?;
        let command = kv
            .get("command")
            .ok_or_else(|| ManifestError::Malformed("missing command".into()))?
            .clone();
        let mut m = RunManifest::new(&command);
        m.version = kv
            .get("version")
            .ok_or_else(|| ManifestError::Malformed("missing version".into()))?
            .clone();
        m.config_path = kv.get("config").cloned();
        m.seed = kv
            .get("seed")
            .map(|s| {
                s.parse()
                    .map_err(|_| ManifestError::Malformed(format!("bad seed `{s}`")))
            })
            .transpose()?;
        for (k, v) in &kv {
            if let Some(name) = k.strip_prefix("artifact.") {
                m.artifacts.push((name.to_string(), v.clone()));
            } else if let Some(name) = k.strip_prefix("param.") {
                m.parameters.push((name.to_string(), v.clone()));
            }
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ManifestError> {
        let path = dir.join(manifest_file(&self.command));
        std::fs::write(&path, self.to_text()).map_err(|source| ManifestError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn load(dir: &Path, command: &str) -> Result<Self, ManifestError> {
        let path = dir.join(manifest_file(command));
        let text = std::fs::read_to_string(&path).map_err(|source| ManifestError::Io { path, source })?;
        Self::parse(&text)
    }

    /// Checks that every listed artifact exists under `dir` with its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<(), ManifestError> {
        for (name, expected) in &self.artifacts {
            let path = dir.join(name);
            if !path.exists() {
                return Err(ManifestError::Missing {
                    name: name.clone(),
                    dir: dir.to_path_buf(),
                });
            }
            let actual = sha256_file(&path)?;
            if &actual != expected {
                return Err(ManifestError::ChecksumMismatch {
                    name: name.clone(),
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}
