//! HTTP diagnosis service: upload leaf cubes, look at them, and classify
//! them with verified pipelines listed in a model manifest.

pub mod api;
pub mod manifest;
pub mod registry;
pub mod report;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{router, AppState, DiagnosisResult, ErrorBody, Probabilities, ServiceConfig};
pub use manifest::{register_pipeline, ManifestEntry, ModelManifest};
pub use registry::Registry;

/// Loads the manifest (if any), binds `addr` and serves until the process
/// is stopped.
pub async fn serve(addr: SocketAddr, manifest: Option<PathBuf>, config: ServiceConfig) -> std::io::Result<()> {
    let registry = match &manifest {
        Some(path) => Registry::load(path).await.map_err(std::io::Error::other)?,
        None => Registry::empty(),
    };
    log::info!("{} model(s) verified, {} skipped", registry.len(), registry.skipped().len());
    let state = AppState::with_manifest(config, registry, manifest);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
