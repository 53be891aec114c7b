//! Symmetric distance matrices and their text formats.
//!
//! Phylip square format: first line `n`, then one row per object with the
//! label left-aligned in a 10-character field followed by the `n` values in
//! fixed point with 6 decimals. Labels may be longer than 10 characters but
//! may not contain whitespace. Infinite entries are written as `inf`.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("a distance matrix needs at least 2 objects, got {0}")]
    TooSmall(usize),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{0}` cannot be written (empty or contains whitespace/comma)")]
    BadLabel(String),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("NaN entry at ({0}, {1})")]
    NotANumber(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Ncd,
    Nwd,
    /// Read from a file that does not record how it was produced.
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Compressor name, count provider id, or input path.
    pub source: String,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
    pub measure: Measure,
    pub provenance: Provenance,
}

impl DistanceMatrix {
    /// `values` is row-major `n * n`. Symmetry must hold exactly.
    pub fn new(
        labels: Vec<String>,
        values: Vec<f64>,
        measure: Measure,
        provenance: Provenance,
    ) -> Result<Self, MatrixError> {
        let n = labels.len();
        if n < 2 {
            return Err(MatrixError::TooSmall(n));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(MatrixError::DuplicateLabel(l.clone()));
            }
        }
        if values.len() != n * n {
            return Err(MatrixError::Shape { expected: n * n, got: values.len() });
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if v.is_nan() {
                    return Err(MatrixError::NotANumber(i, j));
                }
                if j > i && v.to_bits() != values[j * n + i].to_bits() {
                    return Err(MatrixError::Asymmetric(i, j));
                }
            }
        }
        Ok(Self { labels, values, measure, provenance })
    }

    /// Builds from a function over unordered pairs `i <= j`, mirroring it.
    pub fn from_pairs(
        labels: Vec<String>,
        measure: Measure,
        provenance: Provenance,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, MatrixError> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::new(labels, values, measure, provenance)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Reorders rows and columns: entry `(i, j)` of the result is
    /// `(order[i], order[j])` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.len();
        assert_eq!(order.len(), n);
        let labels = order.iter().map(|&k| self.labels[k].clone()).collect();
        let mut values = Vec::with_capacity(n * n);
        for &a in order {
            for &b in order {
                values.push(self.get(a, b));
            }
        }
        Self { labels, values, measure: self.measure, provenance: self.provenance.clone() }
    }

    pub fn has_infinite(&self) -> Option<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| self.get(i, j).is_infinite())
    }

    fn check_labels(&self) -> Result<(), MatrixError> {
        for l in &self.labels {
            if l.is_empty() || l.chars().any(|c| c.is_whitespace() || c == ',') {
                return Err(MatrixError::BadLabel(l.clone()));
            }
        }
        Ok(())
    }

    pub fn to_phylip(&self) -> Result<String, MatrixError> {
        self.check_labels()?;
        let mut out = format!("{}\n", self.len());
        for (i, label) in self.labels.iter().enumerate() {
            write!(out, "{label:<10}").unwrap();
            for &v in self.row(i) {
                out.push(' ');
                out.push_str(&fmt_value(v));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> Result<String, MatrixError> {
        self.check_labels()?;
        let mut out = String::from("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            for &v in self.row(i) {
                out.push(',');
                out.push_str(&fmt_value(v));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_phylip(text: &str) -> Result<Self, MatrixError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(MatrixError::Parse { line: 1, msg: "empty".into() })?;
        let n: usize = first.trim().parse().map_err(|_| MatrixError::Parse {
            line: 1,
            msg: format!("expected object count, got `{}`", first.trim()),
        })?;
        let mut labels = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n * n);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut toks = line.split_whitespace();
            let label = toks.next().expect("nonblank line has a token");
            let row = toks
                .map(|t| parse_value(t).ok_or_else(|| MatrixError::Parse {
                    line: lineno,
                    msg: format!("bad value `{t}`"),
                }))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != n {
                return Err(MatrixError::Parse {
                    line: lineno,
                    msg: format!("expected {n} values, got {}", row.len()),
                });
            }
            labels.push(label.to_string());
            values.extend(row);
        }
        if labels.len() != n {
            return Err(MatrixError::Shape { expected: n, got: labels.len() });
        }
        Self::new(labels, values, Measure::Imported, Provenance::default())
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let n = self.len();
        let diag: Vec<f64> = (0..n).map(|i| self.get(i, i)).collect();
        let mut out_of_range = 0;
        let mut infinite = 0;
        let mut symmetry_residual: f64 = 0.0;
        let mut triangle_violations = 0;
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                if v.is_infinite() {
                    infinite += 1;
                } else if !(0.0..=1.0).contains(&v) {
                    out_of_range += 1;
                }
                symmetry_residual = symmetry_residual.max((v - self.get(j, i)).abs());
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    if k != i && k != j && self.get(i, j) > self.get(i, k) + self.get(k, j) {
                        triangle_violations += 1;
                    }
                }
            }
        }
        if out_of_range > 0 {
            log::warn!("{out_of_range} matrix entries fall outside [0, 1]");
        }
        Diagnostics {
            diagonal_min: diag.iter().copied().fold(f64::INFINITY, f64::min),
            diagonal_max: diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            diagonal_mean: diag.iter().sum::<f64>() / n as f64,
            out_of_range,
            infinite,
            symmetry_residual,
            triangle_violations,
        }
    }
}

/// Summary used to judge compressor quality on a matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub diagonal_min: f64,
    pub diagonal_max: f64,
    pub diagonal_mean: f64,
    /// Finite entries outside `[0, 1]`, counted once per unordered pair
    /// (diagonal included).
    pub out_of_range: usize,
    pub infinite: usize,
    pub symmetry_residual: f64,
    /// Ordered triples `(i, j; k)` with `d(i,j) > d(i,k) + d(k,j)`.
    pub triangle_violations: usize,
}

pub fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

fn parse_value(t: &str) -> Option<f64> {
    match t {
        "inf" => Some(f64::INFINITY),
        _ => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}
