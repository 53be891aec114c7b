//! Normalized Compression Distance.
//!
//! ```text
//! NCD(x, y) = (Z(xy) - min(Z(x), Z(y))) / max(Z(x), Z(y))
//! ```
//!
//! `Z(xy)` is taken as the smaller of the two concatenation orders, which
//! makes the pair value exactly symmetric for order-sensitive compressors.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compress::{Backend, BackendError};
use crate::matrix::{DistanceMatrix, MatrixError, Measure, Provenance};
use crate::par;

#[derive(Debug, Error)]
pub enum NcdError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("pair ({a}, {b}): {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: BackendError,
    },
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("corpus needs at least 2 objects, got {0}")]
    TooFew(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// A named byte sequence compared literally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusObject {
    pub id: String,
    pub data: Vec<u8>,
}

impl CorpusObject {
    pub fn new(id: impl Into<String>, data: impl Into<Vec<u8>>) -> Self {
        Self { id: id.into(), data: data.into() }
    }

    pub fn from_file(path: &Path) -> Result<Self, NcdError> {
        let data = std::fs::read(path)
            .map_err(|source| NcdError::Io { path: path.to_path_buf(), source })?;
        let id = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Self { id, data })
    }
}

/// Loads every regular file of a directory (sorted by name), or, when
/// `path` is a file, every path listed in it one per line.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusObject>, NcdError> {
    let io = |source| NcdError::Io { path: path.to_path_buf(), source };
    let mut paths = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.is_file() {
                paths.push(p);
            }
        }
        paths.sort();
    } else {
        let base = path.parent().unwrap_or(Path::new("."));
        let list = std::fs::read_to_string(path).map_err(io)?;
        for line in list.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let p = Path::new(line);
            paths.push(if p.is_absolute() { p.to_path_buf() } else { base.join(p) });
        }
    }
    let corpus = paths.iter().map(|p| CorpusObject::from_file(p)).collect::<Result<Vec<_>, _>>()?;
    check_ids(&corpus)?;
    Ok(corpus)
}

fn check_ids(corpus: &[CorpusObject]) -> Result<(), NcdError> {
    let mut seen = HashSet::new();
    for o in corpus {
        if !seen.insert(o.id.as_str()) {
            return Err(NcdError::DuplicateId(o.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NcdOptions {
    /// Subtract the backend's empty-input length from every Z.
    pub calibrate: bool,
}

/// Applies the NCD formula to already-measured lengths.
pub fn ncd_from_lengths(zx: f64, zy: f64, zxy: f64) -> f64 {
    let max = zx.max(zy);
    if max <= 0.0 {
        return 0.0;
    }
    (zxy - zx.min(zy)) / max
}

fn check_range(v: f64, a: &str, b: &str) {
    if !(0.0..=1.0).contains(&v) {
        log::warn!("NCD({a}, {b}) = {v:.6} lies outside [0, 1]");
    }
}

struct Lengths<'a> {
    backend: &'a Backend,
    offset: f64,
}

impl<'a> Lengths<'a> {
    fn new(backend: &'a Backend, opts: NcdOptions) -> Result<Self, BackendError> {
        let offset =
            if opts.calibrate { backend.compressed_length(b"")?.bytes_out as f64 } else { 0.0 };
        Ok(Self { backend, offset })
    }

    fn single(&self, x: &[u8]) -> Result<f64, BackendError> {
        Ok(self.backend.compressed_length(x)?.bytes_out as f64 - self.offset)
    }

    fn joint(&self, x: &[u8], y: &[u8]) -> Result<f64, BackendError> {
        let xy = self.backend.concat_length(x, y)?.bytes_out;
        let xy = if x == y { xy } else { xy.min(self.backend.concat_length(y, x)?.bytes_out) };
        Ok(xy as f64 - self.offset)
    }
}

pub fn ncd_pair(
    x: &CorpusObject,
    y: &CorpusObject,
    backend: &Backend,
    opts: NcdOptions,
) -> Result<f64, BackendError> {
    backend.check_window(x.data.len() + y.data.len());
    let z = Lengths::new(backend, opts)?;
    let v = ncd_from_lengths(z.single(&x.data)?, z.single(&y.data)?, z.joint(&x.data, &y.data)?);
    check_range(v, &x.id, &y.id);
    Ok(v)
}

/// Full `n x n` matrix. Pairs are evaluated once per unordered pair,
/// possibly in parallel, and mirrored.
pub fn ncd_matrix(
    corpus: &[CorpusObject],
    backend: &Backend,
    opts: NcdOptions,
) -> Result<DistanceMatrix, NcdError> {
    let n = corpus.len();
    if n < 2 {
        return Err(NcdError::TooFew(n));
    }
    check_ids(corpus)?;
    let z = Lengths::new(backend, opts)?;

    let longest = corpus.iter().map(|o| o.data.len()).max().unwrap_or(0);
    backend.check_window(2 * longest);

    let singles = par::map(corpus, |o| z.single(&o.data));
    let singles = singles
        .into_iter()
        .zip(corpus)
        .map(|(r, o)| {
            r.map_err(|source| NcdError::Pair { a: o.id.clone(), b: o.id.clone(), source })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let joints = par::map(&pairs, |&(i, j)| z.joint(&corpus[i].data, &corpus[j].data));

    let mut values = vec![0.0; n * n];
    for (&(i, j), joint) in pairs.iter().zip(joints) {
        let joint = joint.map_err(|source| NcdError::Pair {
            a: corpus[i].id.clone(),
            b: corpus[j].id.clone(),
            source,
        })?;
        let v = ncd_from_lengths(singles[i], singles[j], joint);
        check_range(v, &corpus[i].id, &corpus[j].id);
        values[i * n + j] = v;
        values[j * n + i] = v;
    }
    let labels = corpus.iter().map(|o| o.id.clone()).collect();
    let provenance = Provenance { source: backend.id().name.clone(), timestamp: None };
    Ok(DistanceMatrix::new(labels, values, Measure::Ncd, provenance)?)
}
