//! Normalized Web Distance over a [`CountSnapshot`].
//!
//! With page counts `f` and normalizer `N`:
//!
//! ```text
//! g(x)    = f(x) / N            G(x)    = log2(1 / g(x))
//! g(x,y)  = f(x,y) / N          G(x,y)  = log2(1 / g(x,y))
//!
//! NWD(x, y) = (max{log f(x), log f(y)} - log f(x,y))
//!           / (log N - min{log f(x), log f(y)})
//! ```
//!
//! The value is undefined when `f(x) = f(y) = 0` and infinite when the
//! doubleton count is zero while a singleton is not.

use std::collections::HashSet;

use thiserror::Error;

use crate::matrix::{DistanceMatrix, Measure, Provenance};
use crate::snapshot::{CountSnapshot, SnapshotError};

#[derive(Debug, Error)]
pub enum NwdError {
    #[error(transparent)]
    Lookup(#[from] SnapshotError),
    #[error("normalizer {normalizer} must exceed min(f(x), f(y)) = {min_count}")]
    InvalidNormalizer { normalizer: u64, min_count: u64 },
    #[error("inconsistent counts: f(x,y) = {joint} > 0 but a singleton count is 0")]
    Inconsistent { joint: u64 },
    #[error("NWD({0}, {1}) is undefined: both terms have zero hits")]
    Undefined(String, String),
    #[error("duplicate term `{0}`")]
    DuplicateTerm(String),
    #[error("need at least 2 terms, got {0}")]
    TooFewTerms(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NwdValue {
    Finite(f64),
    Infinite,
    Undefined,
}

impl NwdValue {
    /// Finite values map to themselves, infinite to `+inf`, undefined to `None`.
    pub fn as_f64(self) -> Option<f64> {
        match self {
            NwdValue::Finite(v) => Some(v),
            NwdValue::Infinite => Some(f64::INFINITY),
            NwdValue::Undefined => None,
        }
    }

    /// A negative finite value, only possible with noisy counts
    /// (`f(x,y) > min(f(x), f(y))`).
    pub fn is_negative(self) -> bool {
        matches!(self, NwdValue::Finite(v) if v < 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NwdOptions {
    /// Replace negative values from noisy counts with 0.
    pub clamp_negative: bool,
}

pub fn g_singleton(s: &CountSnapshot, x: &str) -> Result<f64, SnapshotError> {
    Ok(s.single(x)? as f64 / s.normalizer() as f64)
}

pub fn g_doubleton(s: &CountSnapshot, x: &str, y: &str) -> Result<f64, SnapshotError> {
    Ok(s.pair(x, y)? as f64 / s.normalizer() as f64)
}

/// `log2 N - log2 f` in bits; `+inf` when `f = 0`.
pub fn code_length(count: u64, normalizer: u64) -> f64 {
    if count == 0 {
        return f64::INFINITY;
    }
    (normalizer as f64).log2() - (count as f64).log2()
}

pub fn web_code_length(s: &CountSnapshot, x: &str) -> Result<f64, SnapshotError> {
    Ok(code_length(s.single(x)?, s.normalizer()))
}

pub fn web_code_length_pair(s: &CountSnapshot, x: &str, y: &str) -> Result<f64, SnapshotError> {
    Ok(code_length(s.pair(x, y)?, s.normalizer()))
}

/// NWD from raw counts, with the logarithm supplied by the caller. The
/// result does not depend on the base.
pub fn nwd_counts_with(
    fx: u64,
    fy: u64,
    fxy: u64,
    normalizer: u64,
    log: impl Fn(f64) -> f64,
) -> Result<NwdValue, NwdError> {
    if fx == 0 && fy == 0 {
        return Ok(NwdValue::Undefined);
    }
    if fxy == 0 {
        return Ok(NwdValue::Infinite);
    }
    let (lo, hi) = if fx <= fy { (fx, fy) } else { (fy, fx) };
    if lo == 0 {
        return Err(NwdError::Inconsistent { joint: fxy });
    }
    if normalizer <= lo {
        return Err(NwdError::InvalidNormalizer { normalizer, min_count: lo });
    }
    let num = log(hi as f64) - log(fxy as f64);
    let den = log(normalizer as f64) - log(lo as f64);
    Ok(NwdValue::Finite(num / den))
}

pub fn nwd_counts(
    fx: u64,
    fy: u64,
    fxy: u64,
    normalizer: u64,
    opts: NwdOptions,
) -> Result<NwdValue, NwdError> {
    let v = nwd_counts_with(fx, fy, fxy, normalizer, f64::log2)?;
    if v.is_negative() {
        log::warn!("negative NWD from noisy counts: f(x,y) = {fxy} > min(f(x) = {fx}, f(y) = {fy})");
        if opts.clamp_negative {
            return Ok(NwdValue::Finite(0.0));
        }
    }
    Ok(v)
}

pub fn nwd(s: &CountSnapshot, x: &str, y: &str, opts: NwdOptions) -> Result<NwdValue, NwdError> {
    nwd_counts(s.single(x)?, s.single(y)?, s.pair(x, y)?, s.normalizer(), opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationReport {
    pub total: f64,
    pub residual: f64,
    /// Residual above [`NORMALIZATION_TOLERANCE`].
    pub flagged: bool,
    /// No terms at all.
    pub degenerate: bool,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Sums `g` over every singleton and every stored unordered doubleton. For
/// a snapshot that is complete over its term set the total is 1.
pub fn check_normalization(s: &CountSnapshot) -> NormalizationReport {
    let n = s.normalizer() as f64;
    // Exact integer sum first; the single division keeps rounding at one ulp.
    let counts: u128 = s.singles().map(|(_, c)| u128::from(c)).sum::<u128>()
        + s.pairs().map(|(_, _, c)| u128::from(c)).sum::<u128>();
    let total = counts as f64 / n;
    let residual = (total - 1.0).abs();
    let degenerate = s.singles().next().is_none();
    NormalizationReport {
        total,
        residual,
        flagged: degenerate || residual > NORMALIZATION_TOLERANCE,
        degenerate,
    }
}

/// All pairwise NWD values among `terms`. Infinite entries are kept as
/// `+inf`; an undefined pair aborts.
pub fn nwd_matrix(
    s: &CountSnapshot,
    terms: &[String],
    opts: NwdOptions,
) -> Result<DistanceMatrix, NwdError> {
    if terms.len() < 2 {
        return Err(NwdError::TooFewTerms(terms.len()));
    }
    let mut seen = HashSet::new();
    for t in terms {
        if !seen.insert(t.as_str()) {
            return Err(NwdError::DuplicateTerm(t.clone()));
        }
    }
    let n = terms.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = match nwd(s, &terms[i], &terms[j], opts)? {
                NwdValue::Undefined => {
                    return Err(NwdError::Undefined(terms[i].clone(), terms[j].clone()))
                }
                other => other.as_f64().expect("defined"),
            };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let provenance = Provenance {
        source: s.source.clone().unwrap_or_else(|| "snapshot".into()),
        timestamp: None,
    };
    Ok(DistanceMatrix::new(terms.to_vec(), values, Measure::Nwd, provenance)
        .expect("validated terms and symmetric fill"))
}
