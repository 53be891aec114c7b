//! Seeded synthetic corpora: English-like prose, uniform random bytes and
//! highly repetitive blocks. Used by tests, the demo corpus and the browser
//! page.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::{DistanceMatrix, Measure, Provenance};
use crate::quartet::UnrootedTernaryTree;
use crate::snapshot::CountSnapshot;

const WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "was", "with", "be",
    "by", "on", "not", "he", "this", "are", "or", "his", "from", "at", "which", "but", "have",
    "an", "had", "they", "you", "were", "their", "one", "all", "we", "can", "her", "has",
    "there", "been", "if", "more", "when", "will", "would", "who", "so", "no", "river",
    "morning", "house", "letter", "garden", "window", "evening", "question", "answer",
    "people", "country", "little", "great", "between", "through", "against", "without",
    "another", "himself", "nothing", "something", "whatever", "therefore", "however",
    "although", "because", "remember", "understand", "believe", "consider", "appeared",
    "returned", "continued", "walked", "looked", "thought", "happened", "described",
    "mountain", "village", "stranger", "history", "journey", "silence", "friend", "mother",
    "father", "brother", "sister", "children", "water", "light", "voice", "door", "road",
    "table", "ship", "horse", "rider", "city", "king", "world", "money", "truth", "reason",
];

pub fn english(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_7E47);
    let mut out = String::with_capacity(len + 16);
    let mut start = true;
    while out.len() < len {
        let w = WORDS.choose(&mut rng).expect("nonempty vocabulary");
        if start {
            let mut cs = w.chars();
            let first = cs.next().expect("nonempty word").to_ascii_uppercase();
            out.push(first);
            out.push_str(cs.as_str());
            start = false;
        } else {
            out.push_str(w);
        }
        match rng.gen_range(0..14) {
            0 => {
                out.push_str(". ");
                start = true;
            }
            1 => out.push_str(", "),
            _ => out.push(' '),
        }
    }
    out.truncate(len);
    out.into_bytes()
}

pub fn random(seed: u64, len: usize) -> Vec<u8> {
    let mut buf = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut buf);
    buf
}

/// A short seeded motif repeated to `len` bytes.
pub fn repetitive(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAB_CDEF);
    let motif_len = rng.gen_range(3..12);
    let motif: Vec<u8> = (0..motif_len).map(|_| rng.gen_range(b'a'..=b'z')).collect();
    motif.iter().copied().cycle().take(len).collect()
}

/// Symmetric matrix with independent uniform `[0, 1)` off-diagonal entries.
pub fn random_matrix(labels: &[String], seed: u64) -> DistanceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DistanceMatrix::from_pairs(labels.to_vec(), Measure::Imported, Provenance::default(), |i, j| {
        if i == j {
            0.0
        } else {
            rng.gen::<f64>()
        }
    })
    .expect("labels are valid")
}

/// A random tree with random positive edge weights in `[0.1, 1)` and its
/// path-length metric, which the tree fits exactly.
pub fn additive_matrix(labels: &[String], seed: u64) -> (UnrootedTernaryTree, DistanceMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = UnrootedTernaryTree::random(labels.to_vec(), &mut rng).expect("at least 4 labels");
    let mut weight = std::collections::HashMap::new();
    for (a, b) in tree.edges() {
        weight.insert((a, b), rng.gen_range(0.1..1.0));
    }
    let w = |a: usize, b: usize| weight[&(a.min(b), a.max(b))];
    let dist_from = |src: usize| {
        let mut d = vec![f64::NAN; tree.node_count()];
        d[src] = 0.0;
        let mut stack = vec![src];
        while let Some(v) = stack.pop() {
            for &u in tree.neighbors(v) {
                if d[u].is_nan() {
                    d[u] = d[v] + w(v, u);
                    stack.push(u);
                }
            }
        }
        d
    };
    let rows: Vec<Vec<f64>> = (0..labels.len()).map(dist_from).collect();
    let m = DistanceMatrix::from_pairs(labels.to_vec(), Measure::Imported, Provenance::default(), |i, j| {
        rows[i][j]
    })
    .expect("labels are valid");
    (tree, m)
}

/// Counts shaped like the prime-number experiment: every recipe word and
/// anchor has a singleton count, and every word has a pair count with every
/// anchor. Positives co-occur with "prime" far more often than negatives;
/// all other anchors are noise drawn from the same range for both classes.
pub fn prime_snapshot(seed: u64) -> CountSnapshot {
    use crate::classify::recipe;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9121_3E00);
    let mut s = CountSnapshot::new(10_000_000_000).expect("nonzero normalizer");
    let anchors = [
        ("composite", 50_000_000u64),
        ("number", 900_000_000),
        ("orange", 200_000_000),
        ("prime", 60_000_000),
        ("record", 400_000_000),
    ];
    for (a, f) in anchors {
        s.insert_single(a, f).expect("valid count");
    }
    debug_assert!(anchors.iter().map(|a| a.0).eq(recipe::ANCHORS));
    let words = recipe::training().into_iter().chain(recipe::test());
    for w in words {
        let fw: u64 = rng.gen_range(5_000_000..10_000_000);
        s.insert_single(&w.word, fw).expect("valid count");
        for (a, fa) in anchors {
            let frac = match (a, w.label) {
                ("prime", crate::classify::Label::Positive) => rng.gen_range(0.2..0.4),
                ("prime", crate::classify::Label::Negative) => rng.gen_range(0.001..0.01),
                _ => rng.gen_range(0.01..0.3),
            };
            let joint = (frac * fw.min(fa) as f64).round() as u64;
            s.insert_pair(&w.word, a, joint.max(1)).expect("valid count");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_and_determinism() {
        for f in [english, random, repetitive] {
            assert_eq!(f(3, 777).len(), 777);
            assert_eq!(f(3, 500), f(3, 500));
            assert_ne!(f(3, 500), f(4, 500));
        }
        assert!(english(1, 200).is_ascii());
    }
}
