//! Content-addressed cache of computed fields.
//!
//! Entries are keyed by the SHA-256 of a JSON description of everything the
//! field depends on, prefixed by the cache format version. Writes go through
//! a temporary file and a rename; readers verify the payload checksum and
//! evict damaged entries. A lock file serializes access across processes.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fs2::FileExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::io::{field_from_bytes, field_to_bytes, write_atomic};

/// Bumping this invalidates every stored entry.
pub const CACHE_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "HOROCUT_CACHE";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lookup {
    Hit,
    Miss,
    /// A damaged entry was removed.
    Evicted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub version: u32,
    pub payload: PathBuf,
    pub created_unix: u64,
    pub description: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct FieldCache {
    dir: PathBuf,
}

/// Hex SHA-256 of the versioned JSON encoding of `parts`.
pub fn cache_key<T: Serialize>(parts: &T) -> String {
    let json = serde_json::to_vec(&(CACHE_VERSION, parts)).expect("cache key serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

struct Lock(File);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

impl FieldCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::Io(e).context(format!("cache dir {}", dir.display())))?;
        Ok(FieldCache { dir })
    }

    /// Uses `HOROCUT_CACHE` when set, else `default`.
    pub fn from_env(default: impl Into<PathBuf>) -> Result<Self> {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => FieldCache::new(PathBuf::from(d)),
            _ => FieldCache::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self) -> Result<Lock> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(self.dir.join(".lock"))?;
        f.lock_exclusive()?;
        Ok(Lock(f))
    }

    fn payload_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.hcsf"))
    }

    fn meta_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<(Option<ScalarField>, Lookup)> {
        let _lock = self.lock()?;
        let path = self.payload_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((None, Lookup::Miss)),
            Err(e) => return Err(e.into()),
        };
        match field_from_bytes(&bytes) {
            Ok(f) => Ok((Some(f), Lookup::Hit)),
            Err(Error::Corrupt(_)) => {
                let _ = fs::remove_file(&path);
                let _ = fs::remove_file(self.meta_path(key));
                Ok((None, Lookup::Evicted))
            }
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, field: &ScalarField, description: serde_json::Value) -> Result<CacheEntry> {
        let _lock = self.lock()?;
        let payload = self.payload_path(key);
        write_atomic(&payload, &field_to_bytes(field))?;
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CacheEntry { key: key.into(), version: CACHE_VERSION, payload, created_unix, description };
        write_atomic(&self.meta_path(key), &serde_json::to_vec_pretty(&entry)?)?;
        Ok(entry)
    }

    /// Returns the cached field or computes, stores and returns it.
    pub fn get_or_compute(
        &self,
        key: &str,
        description: serde_json::Value,
        compute: impl FnOnce() -> Result<ScalarField>,
    ) -> Result<(ScalarField, Lookup)> {
        let (hit, status) = self.get(key)?;
        if let Some(f) = hit {
            return Ok((f, status));
        }
        let f = compute()?;
        self.put(key, &f, description)?;
        Ok((f, status))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FieldKind, Grid};

    fn field() -> ScalarField {
        let g = Grid::new([0.0, 0.0], 0.5, 5, 4, [false, false]).unwrap();
        ScalarField::from_fn(g, FieldKind::DistanceToSet, "t", |p| p[0].hypot(p[1]) / 3.0)
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = FieldCache::new(dir.path()).unwrap();
        let k = cache_key(&("euclid", 0.05));
        assert_eq!(c.get(&k).unwrap().1, Lookup::Miss);
        c.put(&k, &field(), serde_json::json!({})).unwrap();
        let (f, s) = c.get(&k).unwrap();
        assert_eq!(s, Lookup::Hit);
        assert_eq!(field_to_bytes(&f.unwrap()), field_to_bytes(&field()));
    }

    #[test]
    fn keys_depend_on_params() {
        assert_ne!(cache_key(&("euclid", 0.05)), cache_key(&("euclid", 0.025)));
        assert_eq!(cache_key(&("euclid", 0.05)).len(), 64);
    }

    #[test]
    fn truncated_entry_is_evicted_and_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let c = FieldCache::new(dir.path()).unwrap();
        let k = cache_key(&"x");
        c.put(&k, &field(), serde_json::json!({})).unwrap();
        let p = c.payload_path(&k);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert_eq!(c.get(&k).unwrap().1, Lookup::Evicted);
        assert!(!p.exists());
        let mut calls = 0;
        let (_, s) = c
            .get_or_compute(&k, serde_json::json!({}), || {
                calls += 1;
                Ok(field())
            })
            .unwrap();
        assert_eq!((s, calls), (Lookup::Miss, 1));
        assert_eq!(c.get(&k).unwrap().1, Lookup::Hit);
    }
}
