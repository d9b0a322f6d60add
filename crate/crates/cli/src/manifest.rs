//! Run manifest: one entry per completed stage with the digest of every output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use drycss_core::binio::{read_json, write_json};
use drycss_core::{Error, GridSpec, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "drycss-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub root_seed: u64,
    /// Paths relative to the output directory, mapped to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub root_seed: u64,
    pub grid: Option<GridSpec>,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    pub fn new(root_seed: u64) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            root_seed,
            grid: None,
            stages: BTreeMap::new(),
        }
    }

    pub fn load_or_new(out: &Path, root_seed: u64) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::new(root_seed));
        }
        let m: Manifest = read_json(&path)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Metadata(format!(
                "{}: unsupported manifest {} v{}",
                path.display(),
                m.format,
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        write_json(&out.join(MANIFEST_FILE), self)
    }

    /// Records `stage` with digests of every file under `stage_dir`.
    pub fn record(&mut self, out: &Path, stage: &str, stage_dir: &Path, root_seed: u64, details: serde_json::Value) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for file in list_files(stage_dir)? {
            let rel = file.strip_prefix(out).unwrap_or(&file);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            outputs.insert(key, sha256_file(&file)?);
        }
        self.root_seed = root_seed;
        self.stages.insert(
            stage.to_string(),
            StageEntry {
                root_seed,
                outputs,
                details,
            },
        );
        Ok(())
    }
}

/// Every regular file below `dir`, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
