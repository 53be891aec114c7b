//! Unrooted ternary trees, quartet-topology cost, and tree search.

mod score;
mod search;
mod tree;

pub use score::{embedded_topology, tree_cost, QuartetScorer, QuartetTopology, TreeScore};
pub use search::{
    exhaustive_best_tree, hill_climb, topology_count, HillClimbConfig, SearchResult, TracePoint,
    EXHAUSTIVE_MAX_LEAVES,
};
pub use tree::{quote_label, UnrootedTernaryTree};

/// `step,score` lines with a header; scores with 6 decimals.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("step,score\n");
    for p in trace {
        out.push_str(&format!("{},{:.6}\n", p.step, p.score));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum QuartetError {
    #[error("a ternary tree needs at least 4 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("exhaustive search supports at most {max} leaves, got {n}")]
    TooManyLeaves { n: usize, max: usize },
    #[error("duplicate leaf label `{0}`")]
    DuplicateLabel(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("leaf labels do not match: {0}")]
    LabelMismatch(String),
    #[error("matrix contains an infinite distance; quartet costs are undefined")]
    InfiniteDistance,
    #[error("newick parse error at character {pos}: {msg}")]
    Newick { pos: usize, msg: String },
}
