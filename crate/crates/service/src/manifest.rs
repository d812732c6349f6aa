//! Model manifest: a JSON list of servable pipelines with content hashes.
//!
//! ```json
//! {
//!   "models": [
//!     {
//!       "model_id": "rf-main",
//!       "kind": "random-forest",
//!       "bands": [21, 32, 60, 79, 97],
//!       "artifact": "rf-main.sdsp",
//!       "sha256": "9f2c...",
//!       "created_at": "2025-01-01T00:00:00+00:00",
//!       "source_url": null
//!     }
//!   ]
//! }
//! ```
//!
//! Relative artifact paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use sds_core::classifiers::ClassifierKind;
use sds_core::eval::Pipeline;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {path} is not valid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("duplicate model_id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model_id: String,
    #[serde(with = "kind_slug")]
    pub kind: ClassifierKind,
    pub bands: Vec<usize>,
    pub artifact: PathBuf,
    pub sha256: String,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub models: Vec<ManifestEntry>,
}

/// Kinds are written as slugs and read with the lenient `FromStr`.
mod kind_slug {
    use sds_core::classifiers::ClassifierKind;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(kind: &ClassifierKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(kind.slug())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ClassifierKind, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(D::Error::custom)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ModelManifest {
    pub fn load(path: &Path) -> Result<ModelManifest, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
        let m: ModelManifest =
            serde_json::from_str(&text).map_err(|source| ManifestError::Json { path: path.into(), source })?;
        m.check_unique()?;
        Ok(m)
    }

    /// Loads `path`, or an empty manifest when the file does not exist yet.
    pub fn load_or_default(path: &Path) -> Result<ModelManifest, ManifestError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(ModelManifest::default())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|source| ManifestError::Io { path: path.into(), source })
    }

    fn check_unique(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for e in &self.models {
            if !seen.insert(e.model_id.as_str()) {
                return Err(ManifestError::DuplicateId(e.model_id.clone()));
            }
        }
        Ok(())
    }

    /// Adds or replaces the entry with the same id.
    pub fn upsert(&mut self, entry: ManifestEntry) {
        match self.models.iter_mut().find(|e| e.model_id == entry.model_id) {
            Some(slot) => *slot = entry,
            None => self.models.push(entry),
        }
    }
}

/// Path of an entry's artifact, resolved against the manifest directory.
pub fn resolve(manifest_dir: &Path, artifact: &Path) -> PathBuf {
    if artifact.is_absolute() {
        artifact.to_path_buf()
    } else {
        manifest_dir.join(artifact)
    }
}

/// Writes `pipeline` next to the manifest and records it, replacing any
/// entry with the same id. Returns the new entry.
pub fn register_pipeline(
    manifest_path: &Path,
    model_id: &str,
    pipeline: &Pipeline,
) -> Result<ManifestEntry, ManifestError> {
    let dir = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let bytes = pipeline.to_bytes();
    let artifact = PathBuf::from(format!("{model_id}.sdsp"));
    let target = dir.join(&artifact);
    std::fs::write(&target, &bytes).map_err(|source| ManifestError::Io { path: target, source })?;
    let entry = ManifestEntry {
        model_id: model_id.to_string(),
        kind: pipeline.classifier.kind(),
        bands: pipeline.bands.clone(),
        artifact,
        sha256: sha256_hex(&bytes),
        created_at: chrono::Utc::now().to_rfc3339(),
        source_url: None,
    };
    let mut manifest = ModelManifest::load_or_default(manifest_path)?;
    manifest.upsert(entry.clone());
    manifest.save(manifest_path)?;
    Ok(entry)
}
