use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatClient, ChatRequest, ClientError};

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    model: String,
    max_tokens: usize,
    text: String,
}

/// Response cache in front of a chat client, one JSON file per key.
///
/// The key is `sha256(prompt, model tag, max tokens)`. Lookups and fills
/// for the same key are serialized so concurrent identical requests hit
/// the backend once.
pub struct CachedChat<C> {
    inner: C,
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<C: ChatClient> CachedChat<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            inner,
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn key(prompt: &str, model_tag: &str, max_tokens: usize) -> String {
        let mut h = Sha256::new();
        for part in [prompt.as_bytes(), model_tag.as_bytes(), max_tokens.to_string().as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        hex::encode(h.finalize())
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("cache lock map poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: ChatClient> ChatClient for CachedChat<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut key = Self::key(&request.prompt, &self.inner.model_tag(), request.max_tokens);
        if request.sample_index > 0 {
            // Repeated samples of one prompt must not collapse into one entry.
            key = format!("{key}-{}", request.sample_index);
        }
        let lock = self.lock_for(&key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        let path = self.dir.join(format!("{key}.json"));
        if let Ok(raw) = fs::read_to_string(&path) {
            if let Ok(rec) = serde_json::from_str::<CacheRecord>(&raw) {
                return Ok(rec.text);
            }
        }
        let text = self.inner.complete(request)?;
        let rec = CacheRecord {
            model: self.inner.model_tag(),
            max_tokens: request.max_tokens,
            text: text.clone(),
        };
        // A failed cache write only costs a future backend call.
        if let Ok(json) = serde_json::to_string(&rec) {
            let tmp = path.with_extension("tmp");
            if fs::write(&tmp, json).is_ok() {
                let _ = fs::rename(&tmp, &path);
            }
        }
        Ok(text)
    }

    fn model_tag(&self) -> String {
        self.inner.model_tag()
    }

    fn is_remote(&self) -> bool {
        self.inner.is_remote()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl ChatClient for Counting {
        fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{}#{n}", request.prompt))
        }
        fn model_tag(&self) -> String {
            "count".into()
        }
    }

    #[test]
    fn second_call_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedChat::new(Counting(AtomicUsize::new(0)), dir.path()).unwrap();
        let req = ChatRequest::new("p", 50, 0.0);
        let a = cached.complete(&req).unwrap();
        let b = cached.complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(cached.inner().0.load(Ordering::SeqCst), 1);
        // Different max_tokens is a different key.
        cached.complete(&ChatRequest::new("p", 100, 0.0)).unwrap();
        assert_eq!(cached.inner().0.load(Ordering::SeqCst), 2);
        // A fresh wrapper over the same directory reuses the stored answer.
        let again = CachedChat::new(Counting(AtomicUsize::new(0)), dir.path()).unwrap();
        assert_eq!(again.complete(&req).unwrap(), a);
        assert_eq!(again.inner().0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn concurrent_identical_requests_hit_backend_once() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedChat::new(Counting(AtomicUsize::new(0)), dir.path()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| cached.complete(&ChatRequest::new("same", 10, 0.0)).unwrap());
            }
        });
        assert_eq!(cached.inner().0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn samples_are_cached_separately() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedChat::new(Counting(AtomicUsize::new(0)), dir.path()).unwrap();
        let a = cached.complete(&ChatRequest::new("p", 10, 0.7).with_sample(0)).unwrap();
        let b = cached.complete(&ChatRequest::new("p", 10, 0.7).with_sample(1)).unwrap();
        assert_ne!(a, b);
        assert_eq!(cached.complete(&ChatRequest::new("p", 10, 0.7).with_sample(1)).unwrap(), b);
        assert_eq!(cached.inner().0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn key_separates_fields() {
        assert_ne!(
            CachedChat::<Counting>::key("ab", "c", 1),
            CachedChat::<Counting>::key("a", "bc", 1)
        );
    }
}
