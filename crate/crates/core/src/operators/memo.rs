use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, RwLock};

use super::EigenResult;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemoKey {
    pub realization: u64,
    /// Bit patterns of `p`, `h` and `tol`.
    pub p: u64,
    pub n: usize,
    pub h: u64,
    pub tol: u64,
    pub stencil: &'static str,
    pub solver: &'static str,
}

/// In-memory store of eigen solves. Concurrent readers, serialized writers,
/// last write wins; cleared wholesale when full.
pub struct MemoStore {
    map: RwLock<HashMap<MemoKey, Arc<EigenResult>>>,
    capacity: usize,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl MemoStore {
    pub fn new(capacity: usize) -> Self {
        MemoStore {
            map: RwLock::new(HashMap::new()),
            capacity,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn get(&self, key: &MemoKey) -> Option<Arc<EigenResult>> {
        let found = self
            .map
            .read()
            .expect("memo lock poisoned")
            .get(key)
            .cloned();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn insert(&self, key: MemoKey, value: Arc<EigenResult>) {
        let mut map = self.map.write().expect("memo lock poisoned");
        if map.len() >= self.capacity && !map.contains_key(&key) {
            map.clear();
        }
        map.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("memo lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(hits, misses)` since creation.
    pub fn stats(&self) -> (u64, u64) {
        (
            self.hits.load(Ordering::Relaxed),
            self.misses.load(Ordering::Relaxed),
        )
    }
}

/// Process-wide store used by [`super::k_p`].
pub fn global_memo() -> Arc<MemoStore> {
    static STORE: OnceLock<Arc<MemoStore>> = OnceLock::new();
    STORE.get_or_init(|| Arc::new(MemoStore::new(256))).clone()
}
