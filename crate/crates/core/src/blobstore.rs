//! Content-addressed blob storage. A blob's handle is the SHA-256 of its
//! content; putting the same bytes twice stores one copy. Retrieval reports
//! a simulated latency that shrinks as a blob gets hotter, standing in for
//! swarm-style popularity caching.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default cap on a single blob.
pub const DEFAULT_MAX_BLOB_LEN: usize = 64 * 1024 * 1024;

/// Base retrieval latency in milliseconds before caching effects.
pub const DEFAULT_BASE_LATENCY_MS: f64 = 200.0;

/// Name of the content hash, pinned for reports and test vectors.
pub const HASH_FUNCTION: &str = "sha-256";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlobError {
    #[error("blob exceeds the configured maximum size")]
    BlobTooLarge,
    #[error("no blob under this handle")]
    NotFound,
    #[error("blob store io: {0}")]
    Io(String),
}

/// 32-byte content hash, rendered as 64 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle([u8; 32]);

impl Handle {
    pub fn of_content(content: &[u8]) -> Handle {
        Handle(Sha256::digest(content).into())
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Handle {
        Handle(bytes)
    }

    pub fn parse_hex(s: &str) -> Option<Handle> {
        let bytes = hex::decode(s).ok()?;
        Some(Handle(bytes.try_into().ok()?))
    }
}

impl fmt::Display for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone)]
struct Blob {
    content: Vec<u8>,
    stored_at: u64,
    access_count: u64,
}

/// Retrieval side data returned by `get`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieval {
    pub latency_ms: f64,
    pub access_count: u64,
}

/// Latency model: popular content is served faster.
pub fn retrieval_latency_ms(base_latency_ms: f64, access_count: u64) -> f64 {
    base_latency_ms / (1.0 + (1.0 + access_count as f64).log2())
}

#[derive(Debug)]
pub struct BlobStore {
    blobs: HashMap<Handle, Blob>,
    root: Option<PathBuf>,
    max_blob_len: usize,
    base_latency_ms: f64,
}

impl BlobStore {
    pub fn in_memory() -> Self {
        BlobStore {
            blobs: HashMap::new(),
            root: None,
            max_blob_len: DEFAULT_MAX_BLOB_LEN,
            base_latency_ms: DEFAULT_BASE_LATENCY_MS,
        }
    }

    /// Store rooted at a directory; blobs live under
    /// `<root>/<first 2 hex chars>/<64-hex-handle>`. Re-running a scenario
    /// against the same root skips re-upload of identical content.
    pub fn persistent(root: impl Into<PathBuf>) -> Result<Self, BlobError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err)?;
        let mut store = BlobStore {
            blobs: HashMap::new(),
            root: Some(root.clone()),
            max_blob_len: DEFAULT_MAX_BLOB_LEN,
            base_latency_ms: DEFAULT_BASE_LATENCY_MS,
        };
        let shards = fs::read_dir(&root).map_err(io_err)?;
        for shard in shards.flatten() {
            if !shard.path().is_dir() {
                continue;
            }
            for entry in fs::read_dir(shard.path()).map_err(io_err)?.flatten() {
                let name = entry.file_name();
                let Some(handle) = name.to_str().and_then(Handle::parse_hex) else {
                    continue;
                };
                let content = fs::read(entry.path()).map_err(io_err)?;
                store.blobs.insert(
                    handle,
                    Blob { content, stored_at: 0, access_count: 0 },
                );
            }
        }
        Ok(store)
    }

    pub fn with_max_blob_len(mut self, max: usize) -> Self {
        self.max_blob_len = max;
        self
    }

    pub fn with_base_latency_ms(mut self, latency: f64) -> Self {
        self.base_latency_ms = latency;
        self
    }

    pub fn base_latency_ms(&self) -> f64 {
        self.base_latency_ms
    }

    /// Stores content and returns its handle. Idempotent.
    pub fn put(&mut self, content: &[u8], block: u64) -> Result<Handle, BlobError> {
        if content.len() > self.max_blob_len {
            return Err(BlobError::BlobTooLarge);
        }
        let handle = Handle::of_content(content);
        if self.blobs.contains_key(&handle) {
            return Ok(handle);
        }
        if let Some(root) = &self.root {
            let shard = root.join(&handle.to_string()[..2]);
            fs::create_dir_all(&shard).map_err(io_err)?;
            let path = shard.join(handle.to_string());
            if !path.exists() {
                fs::write(&path, content).map_err(io_err)?;
            }
        }
        self.blobs.insert(
            handle,
            Blob { content: content.to_vec(), stored_at: block, access_count: 0 },
        );
        Ok(handle)
    }

    /// Fetches a blob, bumping its popularity counter.
    pub fn get(&mut self, handle: &Handle) -> Result<(&[u8], Retrieval), BlobError> {
        let base = self.base_latency_ms;
        let blob = self.blobs.get_mut(handle).ok_or(BlobError::NotFound)?;
        blob.access_count += 1;
        let retrieval = Retrieval {
            latency_ms: retrieval_latency_ms(base, blob.access_count),
            access_count: blob.access_count,
        };
        Ok((&blob.content, retrieval))
    }

    /// Pure membership test; does not touch popularity.
    pub fn has(&self, handle: &Handle) -> bool {
        self.blobs.contains_key(handle)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn access_count(&self, handle: &Handle) -> Option<u64> {
        self.blobs.get(handle).map(|b| b.access_count)
    }

    pub fn stored_at(&self, handle: &Handle) -> Option<u64> {
        self.blobs.get(handle).map(|b| b.stored_at)
    }

    /// Re-hashes every stored blob; true iff all handles still match.
    pub fn audit(&self) -> bool {
        self.blobs
            .iter()
            .all(|(handle, blob)| Handle::of_content(&blob.content) == *handle)
    }
}

fn io_err(e: std::io::Error) -> BlobError {
    BlobError::Io(e.to_string())
}
