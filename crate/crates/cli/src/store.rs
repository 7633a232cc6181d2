//! Result cache and the output writer.

use std::path::{Path, PathBuf};

use hjlab::export::{decode_cache, encode_cache};
use hjlab::ARTIFACT_VERSION;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// `sha256(version ‖ 0 ‖ canonical config)`, hex encoded.
pub fn config_hash(canonical: &str) -> String {
    let mut h = Sha256::new();
    h.update(ARTIFACT_VERSION.as_bytes());
    h.update([0u8]);
    h.update(canonical.as_bytes());
    hex::encode(h.finalize())
}

/// Content-addressed store under `<out>/cache`.
pub struct Cache {
    dir: PathBuf,
    enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheUse {
    Hit,
    Miss,
    Disabled,
}

impl Cache {
    pub fn new(out: &Path, enabled: bool) -> Self {
        Cache {
            dir: out.join("cache"),
            enabled,
        }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    /// Cached value for `key`, or the result of `compute` (stored on success).
    pub fn get_or_compute<T, E>(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<T, E>,
    ) -> Result<(T, CacheUse), E>
    where
        T: Serialize + DeserializeOwned,
        E: From<hjlab::Error>,
    {
        if !self.enabled {
            return compute().map(|v| (v, CacheUse::Disabled));
        }
        if let Ok(bytes) = std::fs::read(self.path(key)) {
            // stale or corrupt entries are recomputed
            if let Ok(Some(v)) = decode_cache::<T>(&bytes) {
                return Ok((v, CacheUse::Hit));
            }
        }
        let v = compute()?;
        let bytes = encode_cache(&v)?;
        std::fs::create_dir_all(&self.dir).map_err(hjlab::Error::from)?;
        let tmp = self.dir.join(format!("{key}.tmp"));
        std::fs::write(&tmp, bytes).map_err(hjlab::Error::from)?;
        std::fs::rename(&tmp, self.path(key)).map_err(hjlab::Error::from)?;
        Ok((v, CacheUse::Miss))
    }
}

/// Collects output files in memory and writes them in one place, manifest
/// last, so a manifest never lists a file that was not written.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn write_all(self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash("spec = \"free\"\n");
        assert_eq!(a, config_hash("spec = \"free\"\n"));
        assert_ne!(a, config_hash("spec = \"prop41\"\n"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn cache_hit_returns_stored_value() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path(), true);
        let (v, u) = cache
            .get_or_compute::<Vec<f64>, hjlab::Error>("k", || Ok(vec![0.1, 0.2]))
            .unwrap();
        assert_eq!((v, u), (vec![0.1, 0.2], CacheUse::Miss));
        let (v, u) = cache
            .get_or_compute::<Vec<f64>, hjlab::Error>("k", || panic!("recomputed"))
            .unwrap();
        assert_eq!((v, u), (vec![0.1, 0.2], CacheUse::Hit));

        std::fs::write(dir.path().join("cache/k.bin"), b"garbage").unwrap();
        let (_, u) = cache
            .get_or_compute::<Vec<f64>, hjlab::Error>("k", || Ok(vec![1.0]))
            .unwrap();
        assert_eq!(u, CacheUse::Miss);

        let off = Cache::new(dir.path(), false);
        let (v, u) = off
            .get_or_compute::<Vec<f64>, hjlab::Error>("k", || Ok(vec![2.0]))
            .unwrap();
        assert_eq!((v, u), (vec![2.0], CacheUse::Disabled));
    }
}
