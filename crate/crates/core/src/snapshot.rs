//! Frozen page counts: singletons, unordered doubletons and the normalizer.
//!
//! Text format, one record per line, fields separated by a tab:
//!
//! ```text
//! #N 8058044651
//! #source fixture
//! horse 46700000
//! rider 12200000
//! horse rider 2630000
//! ```
//!
//! Doubleton keys must be written with the first term strictly smaller
//! (byte-wise) than the second. Terms are UTF-8 and may not contain tabs or
//! line breaks. Other `#` lines are comments. A canonical file (header,
//! optional source, sorted singletons, sorted doubletons) round-trips
//! byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no count for term `{0}`")]
    MissingTerm(String),
    #[error("no count for pair (`{0}`, `{1}`)")]
    MissingPair(String, String),
    #[error("invalid term {0:?}: terms must be nonempty and free of tabs and line breaks")]
    InvalidTerm(String),
    #[error("count {count} for `{term}` exceeds the normalizer {normalizer}")]
    ExceedsNormalizer { term: String, count: u64, normalizer: u64 },
    #[error("the normalizer must be positive")]
    ZeroNormalizer,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Unordered pair of terms stored with the smaller term first.
pub fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) }
}

pub fn check_term(t: &str) -> Result<(), SnapshotError> {
    if t.is_empty() || t.contains(['\t', '\n', '\r']) {
        return Err(SnapshotError::InvalidTerm(t.to_string()));
    }
    Ok(())
}

/// One data line of the snapshot format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Single(String, u64),
    Pair(String, String, u64),
}

impl Record {
    pub fn parse(line: &str, lineno: usize) -> Result<Self, SnapshotError> {
        let err = |msg: String| SnapshotError::Parse { line: lineno, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let count = |s: &str| {
            s.parse::<u64>().map_err(|_| err(format!("count must be a nonnegative integer, got `{s}`")))
        };
        match fields.as_slice() {
            [t, c] if !t.is_empty() => Ok(Record::Single(t.to_string(), count(c)?)),
            [a, b, c] if !a.is_empty() && !b.is_empty() => {
                if a >= b {
                    return Err(err(format!("doubleton key `{a}`, `{b}` is not in sorted order")));
                }
                Ok(Record::Pair(a.to_string(), b.to_string(), count(c)?))
            }
            _ => Err(err(format!("expected 2 or 3 tab-separated fields, got {}", fields.len()))),
        }
    }

    pub fn write(&self, out: &mut String) {
        match self {
            Record::Single(t, c) => writeln!(out, "{t}\t{c}"),
            Record::Pair(a, b, c) => writeln!(out, "{a}\t{b}\t{c}"),
        }
        .expect("writing to a String cannot fail");
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSnapshot {
    singles: BTreeMap<String, u64>,
    pairs: BTreeMap<(String, String), u64>,
    normalizer: u64,
    /// Provider id and fetch time, free text.
    pub source: Option<String>,
}

impl CountSnapshot {
    pub fn new(normalizer: u64) -> Result<Self, SnapshotError> {
        if normalizer == 0 {
            return Err(SnapshotError::ZeroNormalizer);
        }
        Ok(Self { singles: BTreeMap::new(), pairs: BTreeMap::new(), normalizer, source: None })
    }

    pub fn normalizer(&self) -> u64 {
        self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: u64) -> Result<(), SnapshotError> {
        if normalizer == 0 {
            return Err(SnapshotError::ZeroNormalizer);
        }
        if let Some((term, &count)) = self.singles.iter().max_by_key(|(_, c)| **c) {
            if count > normalizer {
                return Err(SnapshotError::ExceedsNormalizer { term: term.clone(), count, normalizer });
            }
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn insert_single(&mut self, term: &str, count: u64) -> Result<(), SnapshotError> {
        check_term(term)?;
        if count > self.normalizer {
            return Err(SnapshotError::ExceedsNormalizer {
                term: term.to_string(),
                count,
                normalizer: self.normalizer,
            });
        }
        self.singles.insert(term.to_string(), count);
        Ok(())
    }

    /// Records `f(a, b)`. A pair of a term with itself is not stored:
    /// `f(x, x)` is always `f(x)`.
    pub fn insert_pair(&mut self, a: &str, b: &str, count: u64) -> Result<(), SnapshotError> {
        check_term(a)?;
        check_term(b)?;
        if a != b {
            self.pairs.insert(pair_key(a, b), count);
        }
        Ok(())
    }

    pub fn single(&self, term: &str) -> Result<u64, SnapshotError> {
        self.singles.get(term).copied().ok_or_else(|| SnapshotError::MissingTerm(term.to_string()))
    }

    pub fn pair(&self, a: &str, b: &str) -> Result<u64, SnapshotError> {
        if a == b {
            return self.single(a);
        }
        self.pairs
            .get(&pair_key(a, b))
            .copied()
            .ok_or_else(|| SnapshotError::MissingPair(a.to_string(), b.to_string()))
    }

    pub fn singles(&self) -> impl Iterator<Item = (&str, u64)> {
        self.singles.iter().map(|(t, &c)| (t.as_str(), c))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.pairs.iter().map(|((a, b), &c)| (a.as_str(), b.as_str(), c))
    }

    /// Every count multiplied by `factor`, normalizer included.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            singles: self.singles.iter().map(|(t, c)| (t.clone(), c * factor)).collect(),
            pairs: self.pairs.iter().map(|(k, c)| (k.clone(), c * factor)).collect(),
            normalizer: self.normalizer * factor,
            source: self.source.clone(),
        }
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut out = format!("#N {}\n", self.normalizer);
        if let Some(src) = &self.source {
            writeln!(out, "#source {src}").unwrap();
        }
        for (t, &c) in &self.singles {
            Record::Single(t.clone(), c).write(&mut out);
        }
        for ((a, b), &c) in &self.pairs {
            Record::Pair(a.clone(), b.clone(), c).write(&mut out);
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, SnapshotError> {
        std::fs::read_to_string(path)
            .map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })?
            .parse()
    }

    pub fn write(&self, path: &Path) -> Result<(), SnapshotError> {
        std::fs::write(path, self.to_text())
            .map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })
    }
}

impl FromStr for CountSnapshot {
    type Err = SnapshotError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut snapshot: Option<CountSnapshot> = None;
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let err = |msg: String| SnapshotError::Parse { line: lineno, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#N ") {
                if snapshot.is_some() {
                    return Err(err("duplicate #N header".into()));
                }
                let n: u64 = rest
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad normalizer `{}`", rest.trim())))?;
                snapshot = Some(CountSnapshot::new(n).map_err(|e| err(e.to_string()))?);
            } else if let Some(rest) = line.strip_prefix("#source ") {
                match snapshot.as_mut() {
                    Some(s) => s.source = Some(rest.to_string()),
                    None => return Err(err("#source before #N header".into())),
                }
            } else if line.starts_with('#') {
                continue;
            } else {
                if snapshot.is_none() {
                    return Err(err("data before #N header".into()));
                }
                records.push((lineno, Record::parse(line, lineno)?));
            }
        }
        let mut snapshot = snapshot.ok_or(SnapshotError::Parse { line: 1, msg: "missing #N header".into() })?;
        for (lineno, rec) in records {
            let err = |msg: String| SnapshotError::Parse { line: lineno, msg };
            let dup = match &rec {
                Record::Single(t, _) => snapshot.singles.contains_key(t),
                Record::Pair(a, b, _) => snapshot.pairs.contains_key(&(a.clone(), b.clone())),
            };
            if dup {
                return Err(err("duplicate key".into()));
            }
            match rec {
                Record::Single(t, c) => snapshot.insert_single(&t, c),
                Record::Pair(a, b, c) => snapshot.insert_pair(&a, &b, c),
            }
            .map_err(|e| err(e.to_string()))?;
        }
        Ok(snapshot)
    }
}
