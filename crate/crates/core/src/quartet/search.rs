use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::replace_neighbor;
use super::{QuartetError, QuartetScorer, TreeScore, UnrootedTernaryTree};
use crate::matrix::DistanceMatrix;
use crate::par;

/// Largest leaf count accepted by [`exhaustive_best_tree`] (945 topologies).
pub const EXHAUSTIVE_MAX_LEAVES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HillClimbConfig {
    pub seed: u64,
    /// Independent climbs; restart `r` uses seed `seed + r`.
    pub restarts: usize,
    /// Consecutive non-improving steps before a climb stops.
    pub patience: u64,
    /// Hard cap on steps per climb.
    pub max_steps: Option<u64>,
}

impl Default for HillClimbConfig {
    fn default() -> Self {
        Self { seed: 0, restarts: 8, patience: 10_000, max_steps: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub tree: UnrootedTernaryTree,
    pub score: TreeScore,
    /// Score after every accepted step of the winning climb, starting at step 0.
    pub trace: Vec<TracePoint>,
    pub restart: usize,
}

/// Sorted copy of `m`; search works on this so the outcome does not depend
/// on the input label order.
fn sorted(m: &DistanceMatrix) -> DistanceMatrix {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| m.labels()[a].cmp(&m.labels()[b]));
    m.permuted(&order)
}

struct Evaluator<'a> {
    scorer: &'a QuartetScorer,
    dist: Vec<u32>,
    queue: Vec<usize>,
    evaluations: u64,
}

impl<'a> Evaluator<'a> {
    fn new(scorer: &'a QuartetScorer) -> Self {
        let n = scorer.len();
        Self { scorer, dist: vec![0; n * n], queue: Vec::new(), evaluations: 0 }
    }

    fn cost(&mut self, t: &UnrootedTernaryTree) -> i128 {
        self.evaluations += 1;
        t.leaf_distances_into(&mut self.dist, &mut self.queue);
        self.scorer.cost_indexed(&self.dist)
    }
}

/// Scores every topology on the leaves of `m` and returns the best; ties go
/// to the lexicographically smallest canonical Newick.
pub fn exhaustive_best_tree(m: &DistanceMatrix) -> Result<(UnrootedTernaryTree, TreeScore), QuartetError> {
    let n = m.len();
    if n > EXHAUSTIVE_MAX_LEAVES {
        return Err(QuartetError::TooManyLeaves { n, max: EXHAUSTIVE_MAX_LEAVES });
    }
    let m = sorted(m);
    let scorer = QuartetScorer::new(&m)?;
    let mut ev = Evaluator::new(&scorer);
    let mut best: Option<(i128, String, UnrootedTernaryTree)> = None;
    let mut t = UnrootedTernaryTree::triple(m.labels().to_vec());
    enumerate(&mut t, 3, &mut |t| {
        let c = ev.cost(t);
        let better = match &best {
            None => true,
            Some((bc, bs, _)) => c < *bc || (c == *bc && t.to_newick() < *bs),
        };
        if better {
            best = Some((c, t.to_newick(), t.clone()));
        }
    });
    let (c, _, tree) = best.expect("at least one topology");
    Ok((tree, scorer.score_of(c, ev.evaluations)))
}

/// Every ternary topology on the leaves of `t`, by stepwise insertion.
fn enumerate(t: &mut UnrootedTernaryTree, k: usize, visit: &mut dyn FnMut(&UnrootedTernaryTree)) {
    if k == t.leaf_count() {
        visit(t);
        return;
    }
    let mid = t.internal_for(k);
    for (a, b) in t.attached_edges() {
        let saved = t.adj.clone();
        t.insert_leaf(k, mid, a, b);
        enumerate(t, k + 1, visit);
        t.adj = saved;
    }
}

/// Number of distinct unrooted ternary topologies on `n` labeled leaves.
pub fn topology_count(n: usize) -> u64 {
    (3..n).map(|k| 2 * k as u64 - 3).product::<u64>().max(1)
}

/// Randomized hill climbing over tree topologies.
///
/// A step applies a geometric number of random mutations (leaf swap,
/// subtree swap, subtree regraft) and keeps the result only if the quartet
/// cost strictly drops. The best of all restarts wins, ties broken by
/// canonical Newick.
pub fn hill_climb(m: &DistanceMatrix, config: &HillClimbConfig) -> Result<SearchResult, QuartetError> {
    let m = sorted(m);
    let scorer = QuartetScorer::new(&m)?;
    let restarts: Vec<usize> = (0..config.restarts.max(1)).collect();
    let runs = par::map(&restarts, |&r| climb(&scorer, config, r));
    let total: u64 = runs.iter().map(|r| r.score.evaluations).sum();
    let mut keyed: Vec<(SearchResult, String)> = runs
        .into_iter()
        .map(|r| {
            let s = r.tree.to_newick();
            (r, s)
        })
        .collect();
    keyed.sort_by(|(a, sa), (b, sb)| {
        b.score.score.total_cmp(&a.score.score).then_with(|| sa.cmp(sb)).then(a.restart.cmp(&b.restart))
    });
    let (mut best, _) = keyed.into_iter().next().expect("at least one restart");
    best.score.evaluations = total;
    Ok(best)
}

fn climb(scorer: &QuartetScorer, config: &HillClimbConfig, restart: usize) -> SearchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
    let mut ev = Evaluator::new(scorer);
    let mut tree = UnrootedTernaryTree::random(scorer.labels().to_vec(), &mut rng)
        .expect("scorer guarantees n >= 4");
    let mut cost = ev.cost(&tree);
    let mut trace = vec![TracePoint { step: 0, score: scorer.normalized(cost) }];
    let mut stale = 0u64;
    let mut step = 0u64;
    while cost != scorer.best() && stale < config.patience && config.max_steps.is_none_or(|c| step < c) {
        step += 1;
        let mut cand = tree.clone();
        let mut k = 1;
        while rng.gen_bool(0.5) {
            k += 1;
        }
        for _ in 0..k {
            mutate(&mut cand, &mut rng);
        }
        debug_assert!(cand.validate().is_ok());
        let c = ev.cost(&cand);
        if c < cost {
            tree = cand;
            cost = c;
            stale = 0;
            trace.push(TracePoint { step, score: scorer.normalized(cost) });
        } else {
            stale += 1;
        }
    }
    SearchResult { tree, score: scorer.score_of(cost, ev.evaluations), trace, restart }
}

pub(crate) fn mutate<R: Rng + ?Sized>(t: &mut UnrootedTernaryTree, rng: &mut R) {
    let done = match rng.gen_range(0..3) {
        0 => leaf_swap(t, rng),
        1 => subtree_swap(t, rng),
        _ => regraft(t, rng),
    };
    if !done {
        leaf_swap(t, rng);
    }
}

/// Nodes on `x`'s side of edge `(x, px)`.
fn side(t: &UnrootedTernaryTree, x: usize, px: usize) -> Vec<bool> {
    let mut mark = vec![false; t.node_count()];
    mark[x] = true;
    let mut stack = vec![x];
    while let Some(v) = stack.pop() {
        for &u in t.neighbors(v) {
            if u != px && !mark[u] {
                mark[u] = true;
                stack.push(u);
            }
        }
    }
    mark
}

fn random_arc<R: Rng + ?Sized>(t: &UnrootedTernaryTree, rng: &mut R) -> (usize, usize) {
    let x = rng.gen_range(0..t.node_count());
    let ns = t.neighbors(x);
    (x, ns[rng.gen_range(0..ns.len())])
}

fn swap_arcs(t: &mut UnrootedTernaryTree, (x, px): (usize, usize), (y, py): (usize, usize)) {
    replace_neighbor(&mut t.adj, px, x, y);
    replace_neighbor(&mut t.adj, py, y, x);
    replace_neighbor(&mut t.adj, x, px, py);
    replace_neighbor(&mut t.adj, y, py, px);
}

fn leaf_swap<R: Rng + ?Sized>(t: &mut UnrootedTernaryTree, rng: &mut R) -> bool {
    let n = t.leaf_count();
    for _ in 0..32 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (pa, pb) = (t.neighbors(a)[0], t.neighbors(b)[0]);
        if pa != pb {
            swap_arcs(t, (a, pa), (b, pb));
            return true;
        }
    }
    false
}

fn subtree_swap<R: Rng + ?Sized>(t: &mut UnrootedTernaryTree, rng: &mut R) -> bool {
    for _ in 0..32 {
        let (x, px) = random_arc(t, rng);
        let (y, py) = random_arc(t, rng);
        if px == py || (y == px && py == x) {
            continue;
        }
        let sx = side(t, x, px);
        let sy = side(t, y, py);
        if sx.iter().zip(&sy).any(|(a, b)| *a && *b) {
            continue;
        }
        swap_arcs(t, (x, px), (y, py));
        return true;
    }
    false
}

fn regraft<R: Rng + ?Sized>(t: &mut UnrootedTernaryTree, rng: &mut R) -> bool {
    for _ in 0..32 {
        let (x, px) = random_arc(t, rng);
        if t.is_leaf(px) {
            continue;
        }
        let sx = side(t, x, px);
        let mut others = t.neighbors(px).iter().copied().filter(|&v| v != x);
        let (u, v) = (others.next().expect("degree 3"), others.next().expect("degree 3"));
        let targets: Vec<(usize, usize)> = t
            .edges()
            .into_iter()
            .filter(|&(a, b)| !sx[a] && !sx[b] && a != px && b != px)
            .collect();
        if targets.is_empty() {
            continue;
        }
        let (a, b) = targets[rng.gen_range(0..targets.len())];
        replace_neighbor(&mut t.adj, u, px, v);
        replace_neighbor(&mut t.adj, v, px, u);
        replace_neighbor(&mut t.adj, a, b, px);
        replace_neighbor(&mut t.adj, b, a, px);
        t.adj[px] = vec![x, a, b];
        return true;
    }
    false
}
