//! Content-addressed persistence of pairwise distance matrices.
//!
//! File layout of `<key>.distcache`, all integers and floats little endian:
//!
//! | bytes      | content                                     |
//! |------------|---------------------------------------------|
//! | 8          | magic `GPLMDIST`                            |
//! | 4          | format version (`u32`, currently 1)         |
//! | 8          | `n` (`u64`)                                 |
//! | 32         | raw SHA-256 dataset key                     |
//! | 8 n^2      | distances, row-major `f64`                  |
//! | 8 n^2      | log volume densities, row-major `f64`       |

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{GplmError, Result};
use crate::geometry::{ManifoldBackend, PreShape};
use crate::smoothing::{PairwiseGeometry, SmootherCache};

const MAGIC: &[u8; 8] = b"GPLMDIST";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

/// SHA-256 over the dimensions and row-major entries of every preshape.
pub fn preshape_hash(shapes: &[PreShape]) -> String {
    let mut h = Sha256::new();
    h.update(b"gplm-preshapes-v1");
    h.update((shapes.len() as u64).to_le_bytes());
    for s in shapes {
        let z = s.matrix();
        h.update((z.nrows() as u64).to_le_bytes());
        h.update((z.ncols() as u64).to_le_bytes());
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                h.update(z[(i, j)].to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

pub fn encode_cache(key: &str, cache: &SmootherCache) -> Result<Vec<u8>> {
    let raw = hex::decode(key)
        .ok()
        .filter(|r| r.len() == 32)
        .ok_or_else(|| GplmError::invalid(format!("cache key '{key}' is not a SHA-256 hex digest")))?;
    let n = cache.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * n * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&raw);
    for m in [cache.distances(), cache.log_density()] {
        for i in 0..n {
            for j in 0..n {
                out.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_cache(bytes: &[u8], expected_key: &str, path: &Path) -> Result<SmootherCache> {
    let bad = |message: &str| GplmError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a distance cache file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap_or_default());
    if version != VERSION {
        return Err(bad(&format!("unsupported cache version {version}")));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap_or_default()) as usize;
    if hex::encode(&bytes[20..52]) != expected_key {
        return Err(bad("cache key does not match the dataset"));
    }
    let body = &bytes[HEADER_LEN..];
    if n.checked_mul(n).and_then(|v| v.checked_mul(16)) != Some(body.len()) {
        return Err(bad("truncated cache body"));
    }
    let matrix = |bytes: &[u8]| {
        DMatrix::from_row_iterator(
            n,
            n,
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default())),
        )
    };
    let distances = matrix(&body[..8 * n * n]);
    let log_density = matrix(&body[8 * n * n..]);
    SmootherCache::from_parts(distances, log_density).map_err(|e| bad(&e.to_string()))
}

/// Process-wide store of distance caches keyed by dataset hash, optionally
/// backed by a directory. Counts how many matrices it had to compute.
#[derive(Debug, Default)]
pub struct CacheStore {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<SmootherCache>>>,
    computations: AtomicUsize,
}

impl CacheStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    /// Number of distance matrices computed (not loaded) by this store.
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::SeqCst)
    }

    pub fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.distcache")))
    }

    fn load(&self, key: &str) -> Option<SmootherCache> {
        let path = self.path_for(key)?;
        let bytes = std::fs::read(&path).ok()?;
        match decode_cache(&bytes, key, &path) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("ignoring unusable cache file: {e}");
                None
            }
        }
    }

    fn persist(&self, key: &str, cache: &SmootherCache) -> Result<()> {
        let Some(path) = self.path_for(key) else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| GplmError::io(dir, e))?;
        }
        let tmp = path.with_extension("distcache.tmp");
        std::fs::write(&tmp, encode_cache(key, cache)?).map_err(|e| GplmError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| GplmError::io(&path, e))
    }

    /// Returns the cache for `key`, loading it from memory or disk, or
    /// computing and storing it.
    pub fn get_or_build<B: ManifoldBackend>(
        &self,
        key: &str,
        backend: &B,
        points: &[B::Point],
    ) -> Result<Arc<SmootherCache>> {
        let mut memory = self
            .memory
            .lock()
            .map_err(|_| GplmError::invalid("cache store lock poisoned"))?;
        if let Some(c) = memory.get(key) {
            return Ok(Arc::clone(c));
        }
        let cache = match self.load(key).filter(|c| c.len() == points.len()) {
            Some(c) => {
                log::info!("loaded distance cache {key}");
                c
            }
            None => {
                let c = SmootherCache::build(backend, points)?;
                self.computations.fetch_add(1, Ordering::SeqCst);
                self.persist(key, &c)?;
                c
            }
        };
        let cache = Arc::new(cache);
        memory.insert(key.to_string(), Arc::clone(&cache));
        Ok(cache)
    }
}
