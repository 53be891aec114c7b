//! Sources of page counts and snapshot assembly.
//!
//! A [`CountProvider`] answers singleton and conjunctive doubleton queries.
//! Experiments always run from a frozen [`CountSnapshot`]; providers exist to
//! create one.

mod cache;
mod live;

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::snapshot::{check_term, pair_key, CountSnapshot, SnapshotError};

pub use cache::{CacheEntry, CachedProvider, CountCache};
#[cfg(feature = "live")]
pub use live::HttpTransport;
pub use live::{Clock, LiveConfig, LiveProvider, RateLimiter, SystemClock, Transport};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no count for {0}")]
    Lookup(Query),
    #[error("request for {query} failed: {msg}; retry later, fetched counts stay cached")]
    Network { query: Query, msg: String },
    #[error("cannot read a count for {query} from the response: {msg}")]
    Response { query: Query, msg: String },
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("cache {path}: {msg}")]
    Cache { path: PathBuf, msg: String },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// A canonical count query. Pairs are unordered and stored sorted; a pair of
/// a term with itself collapses to the singleton.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Query {
    Single(String),
    Pair(String, String),
}

impl Query {
    pub fn single(term: &str) -> Self {
        Query::Single(term.to_string())
    }

    pub fn pair(a: &str, b: &str) -> Self {
        if a == b {
            return Query::single(a);
        }
        let (a, b) = pair_key(a, b);
        Query::Pair(a, b)
    }

    pub fn terms(&self) -> Vec<&str> {
        match self {
            Query::Single(t) => vec![t],
            Query::Pair(a, b) => vec![a, b],
        }
    }
}

impl std::fmt::Display for Query {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Query::Single(t) => write!(f, "`{t}`"),
            Query::Pair(a, b) => write!(f, "`{a}` AND `{b}`"),
        }
    }
}

pub trait CountProvider: Send + Sync {
    /// Short identifier recorded as snapshot provenance.
    fn id(&self) -> String;

    /// Number of pages containing every term of the query.
    fn fetch(&self, query: &Query) -> Result<u64, ProviderError>;

    /// Index size reported by the engine, if known.
    fn index_size(&self) -> Option<u64> {
        None
    }
}

impl<P: CountProvider + ?Sized> CountProvider for Box<P> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn fetch(&self, query: &Query) -> Result<u64, ProviderError> {
        (**self).fetch(query)
    }
    fn index_size(&self) -> Option<u64> {
        (**self).index_size()
    }
}

/// Serves counts from a snapshot file; a miss is an error.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    snapshot: CountSnapshot,
}

impl FixtureProvider {
    pub fn new(snapshot: CountSnapshot) -> Self {
        Self { snapshot }
    }
}

impl CountProvider for FixtureProvider {
    fn id(&self) -> String {
        self.snapshot.source.clone().unwrap_or_else(|| "fixture".into())
    }

    fn fetch(&self, query: &Query) -> Result<u64, ProviderError> {
        let r = match query {
            Query::Single(t) => self.snapshot.single(t),
            Query::Pair(a, b) => self.snapshot.pair(a, b),
        };
        r.map_err(|_| ProviderError::Lookup(query.clone()))
    }

    fn index_size(&self) -> Option<u64> {
        Some(self.snapshot.normalizer())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizerPolicy {
    /// The provider's reported index size, else `fallback`.
    ReportedIndexSize { fallback: Option<u64> },
    Fixed(u64),
}

impl Default for NormalizerPolicy {
    fn default() -> Self {
        NormalizerPolicy::ReportedIndexSize { fallback: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Live,
    Fixture,
}

/// Everything needed to open a provider, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Snapshot file backing a fixture provider.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub live: Option<LiveConfig>,
    /// Minimum gap between upstream requests, milliseconds.
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub normalizer: NormalizerPolicy,
}

impl ProviderConfig {
    pub fn fixture(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Fixture,
            fixture: Some(path.into()),
            live: None,
            delay_ms: 0,
            cache: None,
            normalizer: NormalizerPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if let NormalizerPolicy::Fixed(0) = self.normalizer {
            return Err(ProviderError::Config("fixed normalizer must be positive".into()));
        }
        match self.kind {
            ProviderKind::Fixture if self.fixture.is_none() => {
                Err(ProviderError::Config("fixture provider needs `fixture` path".into()))
            }
            ProviderKind::Live if self.live.is_none() => {
                Err(ProviderError::Config("live provider needs a [live] section".into()))
            }
            _ => Ok(()),
        }
    }

    /// Reads a TOML config; relative `fixture` and `cache` paths are taken
    /// relative to the file.
    pub fn load(path: &std::path::Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(std::path::Path::new("."));
        for p in [&mut cfg.fixture, &mut cfg.cache].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Opens the provider, wrapped in a persistent cache when configured.
    pub fn open(&self) -> Result<Box<dyn CountProvider>, ProviderError> {
        self.validate()?;
        let base: Box<dyn CountProvider> = match self.kind {
            ProviderKind::Fixture => {
                let path = self.fixture.as_ref().expect("validated");
                Box::new(FixtureProvider::new(CountSnapshot::read(path)?))
            }
            ProviderKind::Live => {
                let live = self.live.clone().expect("validated");
                Box::new(LiveProvider::from_config(live, self.delay_ms)?)
            }
        };
        match &self.cache {
            Some(path) => Ok(Box::new(CachedProvider::new(base, CountCache::open(path)?))),
            None => Ok(base),
        }
    }
}

/// One count through the configured provider.
pub fn fetch_count(cfg: &ProviderConfig, terms: &[&str]) -> Result<u64, ProviderError> {
    let query = match terms {
        [t] => Query::single(t),
        [a, b] => Query::pair(a, b),
        _ => return Err(ProviderError::Config(format!("expected 1 or 2 terms, got {}", terms.len()))),
    };
    cfg.open()?.fetch(&query)
}

/// Which doubletons to request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairMode {
    /// Every unordered pair among the terms.
    AllPairs,
    /// Only term-anchor pairs; anchors get singleton counts too.
    Anchored(Vec<String>),
}

pub fn resolve_normalizer(
    policy: NormalizerPolicy,
    provider: &dyn CountProvider,
) -> Result<u64, ProviderError> {
    match policy {
        NormalizerPolicy::Fixed(0) => Err(ProviderError::Config("fixed normalizer must be positive".into())),
        NormalizerPolicy::Fixed(n) => Ok(n),
        NormalizerPolicy::ReportedIndexSize { fallback } => {
            provider.index_size().or(fallback).ok_or_else(|| {
                ProviderError::Config("provider reports no index size and no fallback N is set".into())
            })
        }
    }
}

/// Queries every count needed for NWD among `terms` and assembles a snapshot.
pub fn build_snapshot(
    provider: &dyn CountProvider,
    terms: &[String],
    mode: &PairMode,
    policy: NormalizerPolicy,
) -> Result<CountSnapshot, ProviderError> {
    if terms.is_empty() {
        return Err(ProviderError::Config("no terms given".into()));
    }
    let mut seen = HashSet::new();
    for t in terms {
        check_term(t)?;
        if !seen.insert(t.as_str()) {
            return Err(ProviderError::Config(format!("duplicate term `{t}`")));
        }
    }

    let mut singles: BTreeSet<&str> = terms.iter().map(String::as_str).collect();
    let mut pairs: BTreeSet<Query> = BTreeSet::new();
    match mode {
        PairMode::AllPairs => {
            for (i, a) in terms.iter().enumerate() {
                for b in &terms[i + 1..] {
                    pairs.insert(Query::pair(a, b));
                }
            }
        }
        PairMode::Anchored(anchors) => {
            for a in anchors {
                check_term(a)?;
                singles.insert(a);
            }
            for t in terms {
                for a in anchors {
                    if t != a {
                        pairs.insert(Query::pair(t, a));
                    }
                }
            }
        }
    }

    let normalizer = resolve_normalizer(policy, provider)?;
    let mut snapshot = CountSnapshot::new(normalizer)?;
    for t in singles {
        let c = provider.fetch(&Query::single(t))?;
        snapshot.insert_single(t, c)?;
    }
    for q in pairs {
        let c = provider.fetch(&q)?;
        if let Query::Pair(a, b) = &q {
            snapshot.insert_pair(a, b, c)?;
        }
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    snapshot.source = Some(format!("{}@{secs}", provider.id()));
    Ok(snapshot)
}
