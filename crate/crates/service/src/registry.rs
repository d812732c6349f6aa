//! Verified, loaded models.
//!
//! An entry is served only if its artifact exists (or can be fetched from
//! `source_url`), its SHA-256 matches the manifest, it parses, and its kind
//! and bands agree with the manifest. Everything else is skipped with a
//! logged reason. The artifact is hashed again before every use so a file
//! altered on disk after start-up is refused rather than served.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sds_core::eval::Pipeline;
use sds_core::preprocess::wavelength_of_band;
use serde::Serialize;

use crate::manifest::{resolve, sha256_hex, ManifestEntry, ModelManifest};

#[derive(Debug)]
pub struct ServedModel {
    pub entry: ManifestEntry,
    pub path: PathBuf,
    pub pipeline: Arc<Pipeline>,
}

/// Fields of a served model exposed by `GET /api/models`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub kind: String,
    pub kind_name: String,
    pub bands: Vec<usize>,
    pub wavelengths_nm: Vec<f64>,
    /// `[rows, cols]` the CNN was trained on.
    pub frame: [usize; 2],
    pub sha256: String,
    pub created_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl ServedModel {
    pub fn info(&self) -> ModelInfo {
        let e = &self.entry;
        let (rows, cols) = self.pipeline.frame();
        ModelInfo {
            model_id: e.model_id.clone(),
            kind: e.kind.slug().to_string(),
            kind_name: e.kind.name().to_string(),
            bands: e.bands.clone(),
            wavelengths_nm: e.bands.iter().map(|&b| wavelength_of_band(b).unwrap_or(f64::NAN)).collect(),
            frame: [rows, cols],
            sha256: e.sha256.clone(),
            created_at: e.created_at.clone(),
            source_url: e.source_url.clone(),
        }
    }

    /// Re-hashes the artifact on disk.
    pub fn verify(&self) -> Result<(), String> {
        let bytes = std::fs::read(&self.path).map_err(|e| format!("{}: {e}", self.path.display()))?;
        let got = sha256_hex(&bytes);
        if got.eq_ignore_ascii_case(&self.entry.sha256) {
            Ok(())
        } else {
            Err(format!("artifact {} hashes to {got}, manifest says {}", self.path.display(), self.entry.sha256))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub model_id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<ServedModel>>,
    skipped: Vec<Skipped>,
}

async fn fetch(url: &str) -> Result<Vec<u8>, String> {
    let resp = reqwest::get(url).await.map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(format!("GET {url} returned {}", resp.status()));
    }
    resp.bytes().await.map(|b| b.to_vec()).map_err(|e| e.to_string())
}

async fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<ServedModel, String> {
    let path = resolve(dir, &entry.artifact);
    let bytes = match (std::fs::read(&path), &entry.source_url) {
        (Ok(b), _) => b,
        (Err(_), Some(url)) => {
            let b = fetch(url).await?;
            // Only bytes that match the manifest ever reach the disk.
            if !sha256_hex(&b).eq_ignore_ascii_case(&entry.sha256) {
                return Err(format!("download from {url} does not match sha256"));
            }
            std::fs::write(&path, &b).map_err(|e| format!("{}: {e}", path.display()))?;
            b
        }
        (Err(e), None) => return Err(format!("{}: {e}", path.display())),
    };
    let got = sha256_hex(&bytes);
    if !got.eq_ignore_ascii_case(&entry.sha256) {
        return Err(format!("sha256 mismatch: artifact {got}, manifest {}", entry.sha256));
    }
    let pipeline = Pipeline::from_bytes(&bytes).map_err(|e| e.to_string())?;
    if pipeline.classifier.kind() != entry.kind {
        return Err(format!("artifact holds {}, manifest says {}", pipeline.classifier.kind(), entry.kind));
    }
    if pipeline.bands != entry.bands {
        return Err(format!("artifact bands {:?}, manifest bands {:?}", pipeline.bands, entry.bands));
    }
    Ok(ServedModel { entry: entry.clone(), path, pipeline: Arc::new(pipeline) })
}

impl Registry {
    pub fn empty() -> Registry {
        Registry::default()
    }

    pub async fn from_manifest(manifest: &ModelManifest, dir: &Path) -> Registry {
        let mut reg = Registry::default();
        for entry in &manifest.models {
            match load_entry(dir, entry).await {
                Ok(m) => {
                    log::info!("serving model {} ({})", entry.model_id, entry.kind);
                    reg.models.insert(entry.model_id.clone(), Arc::new(m));
                }
                Err(reason) => {
                    log::warn!("skipping model {}: {reason}", entry.model_id);
                    reg.skipped.push(Skipped { model_id: entry.model_id.clone(), reason });
                }
            }
        }
        reg
    }

    pub async fn load(manifest_path: &Path) -> Result<Registry, crate::manifest::ManifestError> {
        let manifest = ModelManifest::load(manifest_path)?;
        let dir = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Ok(Self::from_manifest(&manifest, dir).await)
    }

    pub fn get(&self, model_id: &str) -> Option<Arc<ServedModel>> {
        self.models.get(model_id).cloned()
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.models.values().map(|m| m.info()).collect()
    }

    pub fn skipped(&self) -> &[Skipped] {
        &self.skipped
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}
