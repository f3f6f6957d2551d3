use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendKind, ChatMessage, GenRequest};

/// Deterministic fallback used by a non-strict mock when no fixture exists.
pub trait Responder: Send + Sync {
    fn respond(&self, messages: &[ChatMessage], index: usize) -> String;
}

/// Stable key for the `index`-th completion of a conversation: the first 128
/// bits of SHA-256 over the JSON encoding of `[messages, index]`, in hex.
pub fn fixture_key(messages: &[ChatMessage], index: usize) -> String {
    let encoded = serde_json::to_vec(&(messages, index)).expect("messages always serialize");
    let digest = Sha256::digest(&encoded);
    hex::encode(&digest[..16])
}

/// Fixture-driven backend. Completion `i` of a request is the fixture stored
/// under `fixture_key(messages, i)`; temperature and model id do not matter.
#[derive(Clone, Default)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    fallback: Option<Arc<dyn Responder>>,
}

impl MockBackend {
    /// Strict mock with no fixtures.
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `<key>.txt` file in `dir`.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut mock = Self::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                mock.fixtures.insert(stem.to_string(), fs::read_to_string(&path)?);
            }
        }
        Ok(mock)
    }

    pub fn with_fallback(mut self, responder: impl Responder + 'static) -> Self {
        self.fallback = Some(Arc::new(responder));
        self
    }

    pub fn is_strict(&self) -> bool {
        self.fallback.is_none()
    }

    pub fn insert(&mut self, messages: &[ChatMessage], index: usize, text: impl Into<String>) {
        self.fixtures.insert(fixture_key(messages, index), text.into());
    }

    pub fn insert_key(&mut self, key: impl Into<String>, text: impl Into<String>) {
        self.fixtures.insert(key.into(), text.into());
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn generate(&self, req: &GenRequest) -> Result<Vec<String>, BackendError> {
        (0..req.n_samples)
            .map(|i| {
                let key = fixture_key(&req.messages, i);
                if let Some(text) = self.fixtures.get(&key) {
                    return Ok(text.clone());
                }
                match &self.fallback {
                    Some(responder) => Ok(responder.respond(&req.messages, i)),
                    None => Err(BackendError::MissingFixture { key }),
                }
            })
            .collect()
    }
}
