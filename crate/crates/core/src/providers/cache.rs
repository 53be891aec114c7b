use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use super::{CountProvider, ProviderError, Query};
use crate::snapshot::Record;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub query: Query,
    pub count: u64,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
}

/// Persistent count cache.
///
/// On disk it is an append-only log of snapshot-format records, each
/// preceded by an `#at <unix seconds>` line. Later records win. `compact`
/// rewrites the log with one record per key in canonical order.
#[derive(Debug)]
pub struct CountCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<Query, CacheEntry>>,
    log: Mutex<Option<File>>,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn to_record(e: &CacheEntry) -> Record {
    match &e.query {
        Query::Single(t) => Record::Single(t.clone(), e.count),
        Query::Pair(a, b) => Record::Pair(a.clone(), b.clone(), e.count),
    }
}

impl CountCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: RwLock::default(), log: Mutex::new(None) }
    }

    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let err = |msg: String| ProviderError::Cache { path: path.to_path_buf(), msg };
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            let mut at = 0;
            for (idx, line) in text.lines().enumerate() {
                if let Some(ts) = line.strip_prefix("#at ") {
                    at = ts.trim().parse().map_err(|_| err(format!("line {}: bad timestamp", idx + 1)))?;
                    continue;
                }
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let query = match Record::parse(line, idx + 1).map_err(|e| err(e.to_string()))? {
                    Record::Single(t, c) => (Query::Single(t), c),
                    Record::Pair(a, b, c) => (Query::Pair(a, b), c),
                };
                let (query, count) = query;
                entries.insert(query.clone(), CacheEntry { query, count, fetched_at: at });
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| err(e.to_string()))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            log: Mutex::new(Some(file)),
        })
    }

    pub fn get(&self, query: &Query) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock poisoned").get(query).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, query: Query, count: u64) -> Result<CacheEntry, ProviderError> {
        let entry = CacheEntry { query, count, fetched_at: now_secs() };
        let mut log = self.log.lock().expect("cache log lock poisoned");
        if let Some(file) = log.as_mut() {
            let mut line = format!("#at {}\n", entry.fetched_at);
            to_record(&entry).write(&mut line);
            file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(|e| {
                ProviderError::Cache { path: self.path.clone().unwrap_or_default(), msg: e.to_string() }
            })?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(entry.query.clone(), entry.clone());
        Ok(entry)
    }

    /// Rewrites the log keeping only the latest record per key.
    pub fn compact(&self) -> Result<(), ProviderError> {
        let Some(path) = &self.path else { return Ok(()) };
        let err = |msg: String| ProviderError::Cache { path: path.clone(), msg };
        let mut log = self.log.lock().expect("cache log lock poisoned");
        let mut text = String::new();
        for e in self.entries.read().expect("cache lock poisoned").values() {
            text.push_str(&format!("#at {}\n", e.fetched_at));
            to_record(e).write(&mut text);
        }
        let tmp = path.with_extension("compact.tmp");
        std::fs::write(&tmp, text).map_err(|e| err(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))?;
        *log = Some(
            OpenOptions::new().append(true).open(path).map_err(|e| err(e.to_string()))?,
        );
        Ok(())
    }
}

/// Write-through cache in front of another provider. Upstream fetches are
/// serialized so that concurrent identical queries hit upstream once.
pub struct CachedProvider<P> {
    inner: P,
    cache: CountCache,
    upstream: Mutex<()>,
}

impl<P: CountProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: CountCache) -> Self {
        Self { inner, cache, upstream: Mutex::new(()) }
    }

    pub fn cache(&self) -> &CountCache {
        &self.cache
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: CountProvider> CountProvider for CachedProvider<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn fetch(&self, query: &Query) -> Result<u64, ProviderError> {
        if let Some(e) = self.cache.get(query) {
            return Ok(e.count);
        }
        let _guard = self.upstream.lock().expect("upstream lock poisoned");
        if let Some(e) = self.cache.get(query) {
            return Ok(e.count);
        }
        let count = self.inner.fetch(query)?;
        self.cache.insert(query.clone(), count)?;
        Ok(count)
    }

    fn index_size(&self) -> Option<u64> {
        self.inner.index_size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting(Arc<AtomicUsize>);

    impl CountProvider for Counting {
        fn id(&self) -> String {
            "counting".into()
        }
        fn fetch(&self, q: &Query) -> Result<u64, ProviderError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            match q {
                Query::Single(t) if t == "fail" => {
                    Err(ProviderError::Network { query: q.clone(), msg: "boom".into() })
                }
                Query::Single(t) => Ok(t.len() as u64 * 10),
                Query::Pair(..) => Ok(3),
            }
        }
    }

    #[test]
    fn idempotent_and_canonical() {
        let calls = Arc::new(AtomicUsize::new(0));
        let p = CachedProvider::new(Counting(calls.clone()), CountCache::in_memory());
        for _ in 0..5 {
            assert_eq!(p.fetch(&Query::single("abc")).unwrap(), 30);
        }
        assert_eq!(p.fetch(&Query::pair("x", "y")).unwrap(), 3);
        assert_eq!(p.fetch(&Query::pair("y", "x")).unwrap(), 3);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn concurrent_identical_queries_fetch_once() {
        let calls = Arc::new(AtomicUsize::new(0));
        let p = CachedProvider::new(Counting(calls.clone()), CountCache::in_memory());
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| p.fetch(&Query::pair("a", "b")).unwrap());
            }
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn persists_across_reopen_and_survives_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let calls = Arc::new(AtomicUsize::new(0));
        {
            let p = CachedProvider::new(Counting(calls.clone()), CountCache::open(&path).unwrap());
            p.fetch(&Query::single("horse")).unwrap();
            p.fetch(&Query::pair("rider", "horse")).unwrap();
            assert!(p.fetch(&Query::single("fail")).is_err());
        }
        let reopened = CountCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get(&Query::single("horse")).unwrap().count, 50);
        assert!(reopened.get(&Query::single("horse")).unwrap().fetched_at > 0);

        let p = CachedProvider::new(Counting(calls.clone()), reopened);
        let before = calls.load(Ordering::SeqCst);
        assert_eq!(p.fetch(&Query::pair("horse", "rider")).unwrap(), 3);
        assert_eq!(calls.load(Ordering::SeqCst), before);
    }

    #[test]
    fn compaction_keeps_latest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let cache = CountCache::open(&path).unwrap();
        cache.insert(Query::single("b"), 1).unwrap();
        cache.insert(Query::single("a"), 2).unwrap();
        cache.insert(Query::single("b"), 7).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 6);
        cache.compact().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let records: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(records, ["a\t2", "b\t7"]);
        cache.insert(Query::single("c"), 4).unwrap();
        assert_eq!(CountCache::open(&path).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_cache_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        std::fs::write(&path, "b\ta\t5\n").unwrap();
        assert!(matches!(CountCache::open(&path), Err(ProviderError::Cache { .. })));
    }
}
