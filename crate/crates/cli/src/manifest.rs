//! Stage manifests: every artifact gets a `<file>.manifest.json` sidecar
//! recording the stage name, input file hashes, the effective config, and
//! the seed. A stage may be skipped when its outputs exist and every
//! recorded input hash still matches the file on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PIPELINE_VERSION: &str = concat!("pns-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

pub fn file_hash(path: &Path) -> Result<String> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = Sha256::digest(&data);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

impl Manifest {
    pub fn build(
        stage: &str,
        seed: Option<u64>,
        inputs: &[&Path],
        config: serde_json::Value,
    ) -> Result<Manifest> {
        let mut map = BTreeMap::new();
        for p in inputs {
            map.insert(p.display().to_string(), file_hash(p)?);
        }
        Ok(Manifest {
            stage: stage.to_string(),
            version: PIPELINE_VERSION.to_string(),
            seed,
            inputs: map,
            config,
        })
    }

    pub fn write_for(&self, artifact: &Path) -> Result<()> {
        let path = manifest_path(artifact);
        let f = std::fs::File::create(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    /// True when an identical manifest already covers an existing
    /// artifact and every recorded input hash still matches on disk.
    pub fn cache_valid(&self, artifact: &Path) -> bool {
        if !artifact.exists() {
            return false;
        }
        let path = manifest_path(artifact);
        let Ok(f) = std::fs::File::open(&path) else {
            return false;
        };
        let Ok(existing) = serde_json::from_reader::<_, Manifest>(f) else {
            return false;
        };
        if existing != *self {
            return false;
        }
        existing.inputs.iter().all(|(p, h)| {
            file_hash(Path::new(p)).map(|cur| cur == *h).unwrap_or(false)
        })
    }
}
