use std::collections::{BTreeSet, HashSet, VecDeque};

use compsim_core::fixtures;
use compsim_core::quartet::{
    embedded_topology, exhaustive_best_tree, hill_climb, tree_cost, HillClimbConfig, QuartetScorer,
    QuartetTopology, UnrootedTernaryTree,
};
use compsim_core::{DistanceMatrix, Measure, Provenance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("L{i}")).collect()
}

/// Node path between two nodes by BFS.
fn path(t: &UnrootedTernaryTree, from: usize, to: usize) -> Vec<usize> {
    let mut parent = vec![usize::MAX; t.node_count()];
    parent[from] = from;
    let mut q = VecDeque::from([from]);
    while let Some(v) = q.pop_front() {
        for &w in t.neighbors(v) {
            if parent[w] == usize::MAX {
                parent[w] = v;
                q.push_back(w);
            }
        }
    }
    let mut out = vec![to];
    let mut v = to;
    while v != from {
        v = parent[v];
        out.push(v);
    }
    out
}

fn disjoint(t: &UnrootedTernaryTree, a: usize, b: usize, c: usize, d: usize) -> bool {
    let p: HashSet<usize> = path(t, a, b).into_iter().collect();
    path(t, c, d).iter().all(|v| !p.contains(v))
}

fn all_topologies(n: usize, seed: u64) -> Vec<UnrootedTernaryTree> {
    let want = (3..2 * n - 4).step_by(2).product::<usize>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < want {
        let t = UnrootedTernaryTree::random(labels(n), &mut rng).unwrap();
        if seen.insert(t.to_newick()) {
            out.push(t);
        }
    }
    out
}

#[test]
fn eight_leaf_tree_embeds_exactly_one_pairing_per_quartet() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let t = UnrootedTernaryTree::random(labels(8), &mut rng).unwrap();
        let l = t.labels().to_vec();
        for a in 0..8 {
            for b in a + 1..8 {
                for c in b + 1..8 {
                    for d in c + 1..8 {
                        let options = [(a, b, c, d), (a, c, b, d), (a, d, b, c)];
                        let good: Vec<_> = options.iter().filter(|&&(w, x, y, z)| disjoint(&t, w, x, y, z)).collect();
                        assert_eq!(good.len(), 1);
                        let &(w, x, y, z) = good[0];
                        let got = embedded_topology(&t, [&l[a], &l[b], &l[c], &l[d]]).unwrap();
                        assert_eq!(got, QuartetTopology::new(&l[w], &l[x], &l[y], &l[z]));
                    }
                }
            }
        }
    }
}

#[test]
fn newick_is_injective_on_five_leaves() {
    let trees = all_topologies(5, 1);
    assert_eq!(trees.len(), 15);
    let strings: HashSet<String> = trees.iter().map(|t| t.to_newick()).collect();
    assert_eq!(strings.len(), 15);
}

#[test]
fn exhaustive_beats_every_six_leaf_tree() {
    let m = fixtures::random_matrix(&labels(6), 66);
    let scorer = QuartetScorer::new(&m).unwrap();
    let (best, score) = exhaustive_best_tree(&m).unwrap();
    let trees = all_topologies(6, 2);
    assert_eq!(trees.len(), 105);
    let mut ties = Vec::new();
    for t in &trees {
        let s = scorer.score(t).unwrap();
        assert!(score.score >= s.score, "{} beats the exhaustive optimum", t);
        if s.score == score.score {
            ties.push(t.to_newick());
        }
    }
    ties.sort();
    assert_eq!(ties[0], best.to_newick());
}

#[test]
fn sixteen_leaf_additive_metric_scores_near_one() {
    let (_, m) = fixtures::additive_matrix(&labels(16), 16);
    let found = hill_climb(&m, &HillClimbConfig::default()).unwrap();
    assert!(found.score.score >= 0.99, "S = {}", found.score.score);
}

#[test]
fn all_equal_matrix_scores_one() {
    let m = DistanceMatrix::from_pairs(labels(6), Measure::Imported, Provenance::default(), |_, _| 0.5).unwrap();
    let t = UnrootedTernaryTree::caterpillar(labels(6)).unwrap();
    assert_eq!(tree_cost(&t, &m).unwrap().score, 1.0);
}

fn matrix_strategy(n: usize) -> impl Strategy<Value = DistanceMatrix> {
    prop::collection::vec(0.0f64..10.0, n * (n - 1) / 2).prop_map(move |upper| {
        let mut values = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                values[i * n + j] = upper[k];
                values[j * n + i] = upper[k];
                k += 1;
            }
        }
        DistanceMatrix::new(labels(n), values, Measure::Imported, Provenance::default()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_is_in_unit_interval(m in (4usize..10).prop_flat_map(matrix_strategy), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = UnrootedTernaryTree::random(m.labels().to_vec(), &mut rng).unwrap();
        let s = tree_cost(&t, &m).unwrap().score;
        prop_assert!((0.0..=1.0).contains(&s), "S = {}", s);
    }

    #[test]
    fn newick_round_trip_keeps_every_quartet(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = UnrootedTernaryTree::random(labels(8), &mut rng).unwrap();
        let back = UnrootedTernaryTree::from_newick(&t.to_newick()).unwrap();
        let l = labels(8);
        for a in 0..8 {
            for b in a + 1..8 {
                for c in b + 1..8 {
                    for d in c + 1..8 {
                        let q = [l[a].as_str(), &l[b], &l[c], &l[d]];
                        prop_assert_eq!(embedded_topology(&t, q).unwrap(), embedded_topology(&back, q).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn relabeling_leaves_score_unchanged(m in matrix_strategy(7), seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..7).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let config = HillClimbConfig { seed, restarts: 2, patience: 300, max_steps: None };
        let a = hill_climb(&m, &config).unwrap();
        let b = hill_climb(&m.permuted(&order), &config).unwrap();
        prop_assert_eq!(a.score.score, b.score.score);
        prop_assert_eq!(a.tree.to_newick(), b.tree.to_newick());
    }

    #[test]
    fn trace_never_decreases(m in matrix_strategy(8), seed in any::<u64>()) {
        let r = hill_climb(&m, &HillClimbConfig { seed, restarts: 1, patience: 500, max_steps: None }).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[0].score <= w[1].score && w[0].step < w[1].step));
        prop_assert_eq!(r.trace.last().unwrap().score, r.score.score);
    }
}
