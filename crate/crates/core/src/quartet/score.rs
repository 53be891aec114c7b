use std::fmt;

use super::{QuartetError, UnrootedTernaryTree};
use crate::matrix::DistanceMatrix;

const QUANTUM: f64 = (1u64 << 52) as f64;

/// A resolved quartet `ab|cd`: pairs are sorted internally and against
/// each other.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuartetTopology {
    pub pairs: [[String; 2]; 2],
}

impl QuartetTopology {
    pub fn new(a: &str, b: &str, c: &str, d: &str) -> Self {
        let mut p = [sorted_pair(a, b), sorted_pair(c, d)];
        p.sort();
        Self { pairs: p }
    }

    /// `d(a,b) + d(c,d)` for pairing `ab|cd`.
    pub fn cost(&self, m: &DistanceMatrix) -> Option<f64> {
        let d = |x: &str, y: &str| Some(m.get(m.index_of(x)?, m.index_of(y)?));
        Some(d(&self.pairs[0][0], &self.pairs[0][1])? + d(&self.pairs[1][0], &self.pairs[1][1])?)
    }
}

fn sorted_pair(a: &str, b: &str) -> [String; 2] {
    if a <= b {
        [a.to_string(), b.to_string()]
    } else {
        [b.to_string(), a.to_string()]
    }
}

impl fmt::Display for QuartetTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}|{}{}", self.pairs[0][0], self.pairs[0][1], self.pairs[1][0], self.pairs[1][1])
    }
}

/// The pairing of four leaves that `tree` embeds.
pub fn embedded_topology(
    tree: &UnrootedTernaryTree,
    leaves: [&str; 4],
) -> Result<QuartetTopology, QuartetError> {
    let mut idx = [0usize; 4];
    for (slot, l) in idx.iter_mut().zip(leaves) {
        *slot = tree
            .leaf_index(l)
            .ok_or_else(|| QuartetError::LabelMismatch(format!("`{l}` is not a leaf")))?;
    }
    if (0..4).any(|i| (i + 1..4).any(|j| idx[i] == idx[j])) {
        return Err(QuartetError::LabelMismatch("quartet leaves must be distinct".into()));
    }
    let n = tree.leaf_count();
    let t = tree.leaf_distances();
    let d = |i: usize, j: usize| t[idx[i] * n + idx[j]];
    let sums = [d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)];
    let [a, b, c, e] = leaves;
    Ok(match pick(sums) {
        0 => QuartetTopology::new(a, b, c, e),
        1 => QuartetTopology::new(a, c, b, e),
        _ => QuartetTopology::new(a, e, b, c),
    })
}

/// Index of the strict minimum of three path-length sums. In a ternary
/// tree exactly one pairing has disjoint paths and it is strictly shortest.
#[inline]
fn pick(s: [u32; 3]) -> usize {
    if s[0] < s[1] && s[0] < s[2] {
        0
    } else if s[1] < s[2] {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeScore {
    /// Total cost `C_T` in matrix units.
    pub raw_cost: f64,
    /// Normalized score in `[0, 1]`.
    pub score: f64,
    /// Number of tree cost evaluations spent.
    pub evaluations: u64,
}

/// Precomputed quartet cost bounds for one matrix.
///
/// Distances are quantized to integers relative to the largest magnitude
/// so that every sum is exact and independent of summation order.
#[derive(Debug, Clone)]
pub struct QuartetScorer {
    n: usize,
    labels: Vec<String>,
    q: Vec<i64>,
    scale: f64,
    best: i128,
    worst: i128,
}

impl QuartetScorer {
    pub fn new(m: &DistanceMatrix) -> Result<Self, QuartetError> {
        let n = m.len();
        if n < 4 {
            return Err(QuartetError::TooFewLeaves(n));
        }
        if m.has_infinite().is_some() {
            return Err(QuartetError::InfiniteDistance);
        }
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    scale = scale.max(m.get(i, j).abs());
                }
            }
        }
        let mut q = vec![0i64; n * n];
        if scale > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        q[i * n + j] = (m.get(i, j) / scale * QUANTUM).round() as i64;
                    }
                }
            }
        }
        let mut s = Self { n, labels: m.labels().to_vec(), q, scale, best: 0, worst: 0 };
        s.bounds();
        Ok(s)
    }

    fn bounds(&mut self) {
        let (mut best, mut worst) = (0i128, 0i128);
        self.for_each_quartet(|c| {
            best += c.iter().min().copied().unwrap() as i128;
            worst += c.iter().max().copied().unwrap() as i128;
        });
        self.best = best;
        self.worst = worst;
    }

    /// Calls `f` with the three pairing costs of every quartet `i<j<k<l`.
    #[inline]
    fn for_each_quartet(&self, mut f: impl FnMut([i64; 3])) {
        let n = self.n;
        let q = &self.q;
        for i in 0..n {
            for j in i + 1..n {
                let ij = q[i * n + j];
                for k in j + 1..n {
                    let (ik, jk) = (q[i * n + k], q[j * n + k]);
                    for l in k + 1..n {
                        f([ij + q[k * n + l], ik + q[j * n + l], q[i * n + l] + jk]);
                    }
                }
            }
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `m` and `M` in matrix units.
    pub fn bounds_raw(&self) -> (f64, f64) {
        (self.to_raw(self.best), self.to_raw(self.worst))
    }

    fn to_raw(&self, c: i128) -> f64 {
        c as f64 / QUANTUM * self.scale
    }

    pub(crate) fn best(&self) -> i128 {
        self.best
    }

    /// Integer cost of a tree whose leaf `i` is matrix row `i`.
    pub(crate) fn cost_indexed(&self, tree_dist: &[u32]) -> i128 {
        let n = self.n;
        let t = tree_dist;
        let mut total = 0i128;
        for i in 0..n {
            for j in i + 1..n {
                let ij = t[i * n + j];
                for k in j + 1..n {
                    let (ik, jk) = (t[i * n + k], t[j * n + k]);
                    let qij = self.q[i * n + j];
                    let (qik, qjk) = (self.q[i * n + k], self.q[j * n + k]);
                    for l in k + 1..n {
                        let s = [ij + t[k * n + l], ik + t[j * n + l], t[i * n + l] + jk];
                        let c = match pick(s) {
                            0 => qij + self.q[k * n + l],
                            1 => qik + self.q[j * n + l],
                            _ => self.q[i * n + l] + qjk,
                        };
                        total += c as i128;
                    }
                }
            }
        }
        total
    }

    pub(crate) fn normalized(&self, cost: i128) -> f64 {
        if self.worst == self.best {
            return 1.0;
        }
        (self.worst - cost) as f64 / (self.worst - self.best) as f64
    }

    pub(crate) fn score_of(&self, cost: i128, evaluations: u64) -> TreeScore {
        TreeScore { raw_cost: self.to_raw(cost), score: self.normalized(cost), evaluations }
    }

    /// Scores `tree` against this matrix; leaves are matched by label.
    pub fn score(&self, tree: &UnrootedTernaryTree) -> Result<TreeScore, QuartetError> {
        let t = tree.reindexed(&self.labels)?;
        Ok(self.score_of(self.cost_indexed(&t.leaf_distances()), 1))
    }
}

/// Total quartet cost `C_T` and normalized score of `tree` under `m`.
pub fn tree_cost(tree: &UnrootedTernaryTree, m: &DistanceMatrix) -> Result<TreeScore, QuartetError> {
    QuartetScorer::new(m)?.score(tree)
}
