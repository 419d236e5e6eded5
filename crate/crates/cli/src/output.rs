//! Output directory handling and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use kpo::{Complex64, DensityMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EFFECTIVE_CONFIG_FILE: &str = "config.effective.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<OutputEntry>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn checksums(&self) -> Vec<(String, String)> {
        self.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writable output directory that also collects warnings and summary values.
pub struct OutputDir {
    root: PathBuf,
    pub warnings: Vec<String>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            warnings: Vec::new(),
            summary: serde_json::Map::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    pub fn record<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        log::warn!("{m}");
        self.warnings.push(m);
    }

    pub fn warn_all(&mut self, context: &str, messages: &[String]) {
        for m in messages {
            self.warn(format!("{context}: {m}"));
        }
    }

    /// Lists every file below the root except the manifest, sorted by path.
    pub fn inventory(&self) -> Result<Vec<OutputEntry>, CliError> {
        let mut files = Vec::new();
        collect_files(&self.root, &mut files)?;
        let mut entries = Vec::with_capacity(files.len());
        for path in files {
            let rel = path
                .strip_prefix(&self.root)
                .expect("collected below root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            entries.push(OutputEntry {
                path: rel,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(entries)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Density matrix as JSON: dimension plus real and imaginary parts, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub dim: usize,
    pub mean_photon_number: f64,
    pub parity: f64,
    pub purity: f64,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for DensityRecord {
    fn from(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let d = rho.dim();
        let part = |f: fn(&Complex64) -> f64| (0..d).map(|i| (0..d).map(|j| f(&m[(i, j)])).collect()).collect();
        DensityRecord {
            dim: d,
            mean_photon_number: rho.mean_photon_number(),
            parity: rho.parity(),
            purity: rho.purity(),
            re: part(|z| z.re),
            im: part(|z| z.im),
        }
    }
}
