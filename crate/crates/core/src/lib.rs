//! Similarity from compression and from page counts, clustering into
//! unrooted ternary trees by quartet-topology optimization, and anchor-word
//! classification.
//!
//! * [`compress`]: compressed-length oracles (builtin LZSS, DEFLATE, subprocesses)
//! * [`ncd`]: Normalized Compression Distance for pairs and corpora
//! * [`snapshot`], [`nwd`]: frozen page counts and the Normalized Web Distance
//! * [`providers`]: count sources (fixture, cached, live HTTP)
//! * [`quartet`]: ternary trees, quartet scoring, exhaustive and hill-climbing search
//! * [`classify`]: anchor features and a linear max-margin classifier
//! * [`pipeline`]: corpus or terms to matrix, tree and manifest
//!
//! ```no_run
//! use std::path::Path;
//!
//! use compsim_core::compress::BackendRegistry;
//! use compsim_core::ncd::{load_corpus, ncd_matrix, NcdOptions};
//! use compsim_core::quartet::{hill_climb, HillClimbConfig};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let corpus = load_corpus(Path::new("data/demo/corpus"))?;
//! let backend = BackendRegistry::with_defaults().get("builtin")?;
//! let m = ncd_matrix(&corpus, &backend, NcdOptions::default())?;
//! let best = hill_climb(&m, &HillClimbConfig { seed: 42, ..Default::default() })?;
//! println!("{} S={:.4}", best.tree.to_newick(), best.score.score);
//! # Ok(())
//! # }
//! ```

pub mod classify;
pub mod compress;
pub mod fixtures;
pub mod matrix;
pub mod ncd;
pub mod nwd;
mod par;
pub mod pipeline;
pub mod providers;
pub mod quartet;
pub mod snapshot;

pub use matrix::{DistanceMatrix, Measure, Provenance};
