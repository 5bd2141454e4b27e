//! Content-addressed on-disk cache with integrity hashes.
//!
//! An entry file is `FWCACHE1 | sha256(payload) | payload`. A hash mismatch
//! evicts the file and reports corruption.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"FWCACHE1";

/// Entry key: a kind tag plus the sha256 of every input that determines the payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub kind: String,
    pub digest: [u8; 32],
}

impl CacheKey {
    /// Hash the parts in order, each prefixed by its length.
    pub fn new(kind: &str, parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        CacheKey { kind: kind.to_string(), digest: h.finalize().into() }
    }

    pub fn file_name(&self) -> String {
        format!("{}-{}.bin", self.kind, hex(&self.digest))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Cache { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// `Ok(None)` on a miss; a corrupted entry is removed and reported.
    pub fn get(&self, key: &CacheKey) -> Result<Option<Vec<u8>>> {
        let path = self.path(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let intact = bytes.len() >= 40
            && &bytes[..8] == MAGIC
            && Sha256::digest(&bytes[40..]).as_slice() == &bytes[8..40];
        if !intact {
            std::fs::remove_file(&path)?;
            return Err(Error::CacheCorrupted(path.display().to_string()));
        }
        Ok(Some(bytes[40..].to_vec()))
    }

    /// Writes through a temporary file so readers never see a partial entry.
    pub fn put(&self, key: &CacheKey, payload: &[u8]) -> Result<()> {
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        let mut bytes = Vec::with_capacity(payload.len() + 40);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&Sha256::digest(payload));
        bytes.extend_from_slice(payload);
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Flat little-endian encoding of a list of matrices.
pub fn encode_matrices(mats: &[&nalgebra::DMatrix<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(mats.len() as u64).to_le_bytes());
    for m in mats {
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_matrices(bytes: &[u8]) -> Result<Vec<nalgebra::DMatrix<f64>>> {
    let mut pos = 0usize;
    let word = |pos: &mut usize| -> Result<[u8; 8]> {
        let w = bytes
            .get(*pos..*pos + 8)
            .ok_or_else(|| Error::Format("truncated matrix payload".into()))?;
        *pos += 8;
        Ok(w.try_into().expect("eight bytes"))
    };
    let count = u64::from_le_bytes(word(&mut pos)?) as usize;
    let mut mats = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let r = u64::from_le_bytes(word(&mut pos)?) as usize;
        let c = u64::from_le_bytes(word(&mut pos)?) as usize;
        let n = r.checked_mul(c).ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        if bytes.len() < pos + 8 * n {
            return Err(Error::Format("truncated matrix payload".into()));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(word(&mut pos)?));
        }
        mats.push(nalgebra::DMatrix::from_vec(r, c, data));
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after matrix payload".into()));
    }
    Ok(mats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_roundtrip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let key = CacheKey::new("op", &[b"a", b"bc"]);
        assert!(cache.get(&key).unwrap().is_none());
        let payload: Vec<u8> = (0..=255u8).cycle().take(1000).collect();
        cache.put(&key, &payload).unwrap();
        assert_eq!(cache.get(&key).unwrap().unwrap(), payload);
        assert_ne!(key, CacheKey::new("op", &[b"ab", b"c"]));
    }

    #[test]
    fn flipped_byte_is_detected_and_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let key = CacheKey::new("op", &[b"x"]);
        cache.put(&key, &[7u8; 64]).unwrap();
        let path = cache.path(&key);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[50] ^= 0x10;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(cache.get(&key), Err(Error::CacheCorrupted(_))));
        assert!(!path.exists());
        assert!(cache.get(&key).unwrap().is_none());
    }

    #[test]
    fn matrix_codec_roundtrip() {
        let a = nalgebra::DMatrix::from_fn(3, 5, |i, j| (i * 7 + j) as f64 - 0.5);
        let b = nalgebra::DMatrix::from_element(1, 1, f64::MIN_POSITIVE);
        let bytes = encode_matrices(&[&a, &b]);
        let back = decode_matrices(&bytes).unwrap();
        assert_eq!(back, vec![a, b]);
        assert!(decode_matrices(&bytes[..bytes.len() - 1]).is_err());
    }
}
