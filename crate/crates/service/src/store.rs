//! Uploaded cubes, kept in memory up to a capacity with least-recently-used
//! eviction. With a spill directory, evicted cubes are written there as HSC
//! files and read back on the next access; without one they are dropped and
//! their ids stop resolving.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use sds_core::hsio::{parse_hsc, write_hsc, CubeFormat};
use sds_core::{Cube, Stage};
use serde::Serialize;

/// Everything about an upload except the voxels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeMeta {
    pub cube_id: String,
    pub filename: String,
    pub format: CubeFormat,
    pub uploaded_at: String,
    /// `[rows, cols, bands]` as uploaded.
    pub original_dims: [usize; 3],
    /// `[rows, cols, bands]` as stored.
    pub dims: [usize; 3],
    pub stage: Stage,
}

#[derive(Debug, Clone)]
pub struct CubeHandle {
    pub meta: Arc<CubeMeta>,
    pub cube: Arc<Cube>,
}

#[derive(Debug, Default)]
struct Inner {
    meta: HashMap<String, Arc<CubeMeta>>,
    /// Resident cubes with their last-use tick.
    resident: HashMap<String, (u64, Arc<Cube>)>,
    tick: u64,
}

#[derive(Debug)]
pub struct CubeStore {
    capacity: usize,
    spill: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl CubeStore {
    pub fn new(capacity: usize, spill: Option<PathBuf>) -> CubeStore {
        CubeStore { capacity: capacity.max(1), spill, inner: Mutex::new(Inner::default()) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn resident_count(&self) -> usize {
        self.inner.lock().expect("store lock").resident.len()
    }

    fn spill_path(&self, id: &str) -> Option<PathBuf> {
        self.spill.as_ref().map(|d| d.join(format!("{id}.hsc")))
    }

    pub fn insert(&self, meta: CubeMeta, cube: Cube) -> CubeHandle {
        let meta = Arc::new(meta);
        let cube = Arc::new(cube);
        let mut g = self.inner.lock().expect("store lock");
        g.tick += 1;
        let tick = g.tick;
        g.meta.insert(meta.cube_id.clone(), meta.clone());
        g.resident.insert(meta.cube_id.clone(), (tick, cube.clone()));
        self.evict(&mut g);
        CubeHandle { meta, cube }
    }

    fn evict(&self, g: &mut Inner) {
        while g.resident.len() > self.capacity {
            let oldest = g.resident.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k.clone()).expect("non-empty");
            let (_, cube) = g.resident.remove(&oldest).expect("present");
            match self.spill_path(&oldest) {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, write_hsc(&cube)) {
                        log::warn!("cannot spill cube {oldest} to {}: {e}", path.display());
                        g.meta.remove(&oldest);
                    }
                }
                None => {
                    g.meta.remove(&oldest);
                }
            }
        }
    }

    pub fn meta(&self, id: &str) -> Option<Arc<CubeMeta>> {
        self.inner.lock().expect("store lock").meta.get(id).cloned()
    }

    pub fn get(&self, id: &str) -> Option<CubeHandle> {
        let mut g = self.inner.lock().expect("store lock");
        let meta = g.meta.get(id)?.clone();
        g.tick += 1;
        let tick = g.tick;
        if let Some(entry) = g.resident.get_mut(id) {
            entry.0 = tick;
            return Some(CubeHandle { meta, cube: entry.1.clone() });
        }
        let path = self.spill_path(id)?;
        let cube = match std::fs::read(&path).map_err(|e| e.to_string()).and_then(|b| parse_hsc(&b).map_err(|e| e.to_string())) {
            Ok(c) => Arc::new(c),
            Err(e) => {
                log::warn!("cannot reload spilled cube {id}: {e}");
                return None;
            }
        };
        g.resident.insert(id.to_string(), (tick, cube.clone()));
        self.evict(&mut g);
        Some(CubeHandle { meta, cube })
    }
}
