//! End-to-end runs: corpus or terms to distance matrix, tree and manifest.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! seed = 42
//! output = "out"
//!
//! [ncd]
//! corpus = "corpus/"
//! backend = "builtin"
//!
//! [search]
//! restarts = 8
//! ```
//!
//! or with an `[nwd]` table (`snapshot`, `terms` or `terms_file`) instead
//! of `[ncd]`. Relative paths are resolved against the config file. The run
//! writes `matrix.phylip`, `tree.newick`, `trace.csv` and `manifest.json`
//! into `output`; nothing is left behind if any stage fails.
//!
//! The tree is built from the matrix as written to disk, so clustering
//! `matrix.phylip` with the same seed reproduces `tree.newick`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compress::{BackendError, BackendRegistry, BackendSettings, CompressorId};
use crate::matrix::{DistanceMatrix, MatrixError};
use crate::ncd::{load_corpus, ncd_matrix, NcdError, NcdOptions};
use crate::nwd::{nwd_matrix, NwdError, NwdOptions};
use crate::quartet::{hill_climb, trace_csv, HillClimbConfig, QuartetError};
use crate::snapshot::{CountSnapshot, SnapshotError};

pub const MATRIX_FILE: &str = "matrix.phylip";
pub const TREE_FILE: &str = "tree.newick";
pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("clustering needs at least 4 objects, got {0}")]
    TooFew(usize),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Ncd(#[from] NcdError),
    #[error(transparent)]
    Nwd(#[from] NwdError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Quartet(#[from] QuartetError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    pub ncd: Option<NcdStage>,
    pub nwd: Option<NwdStage>,
    #[serde(default)]
    pub search: SearchStage,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NcdStage {
    pub corpus: PathBuf,
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Extra backend definitions.
    pub backends: Option<PathBuf>,
    #[serde(default)]
    pub calibrate: bool,
}

fn default_backend() -> String {
    "builtin".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NwdStage {
    pub snapshot: PathBuf,
    pub terms: Option<Vec<String>>,
    pub terms_file: Option<PathBuf>,
    #[serde(default)]
    pub clamp_negative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchStage {
    pub restarts: usize,
    pub patience: u64,
    pub max_steps: Option<u64>,
}

impl Default for SearchStage {
    fn default() -> Self {
        let d = HillClimbConfig::default();
        Self { restarts: d.restarts, patience: d.patience, max_steps: d.max_steps }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut c: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        match (&c.ncd, &c.nwd) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(PipelineError::Config("exactly one of [ncd] or [nwd] is required".into()))
            }
            _ => {}
        }
        if let Some(w) = &c.nwd {
            if w.terms.is_some() == w.terms_file.is_some() {
                return Err(PipelineError::Config("[nwd] needs exactly one of terms or terms_file".into()));
            }
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut c.output);
        if let Some(n) = &mut c.ncd {
            resolve(&mut n.corpus);
            if let Some(b) = &mut n.backends {
                resolve(b);
            }
        }
        if let Some(w) = &mut c.nwd {
            resolve(&mut w.snapshot);
            if let Some(t) = &mut w.terms_file {
                resolve(t);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn hill_climb_config(&self) -> HillClimbConfig {
        HillClimbConfig {
            seed: self.seed,
            restarts: self.search.restarts,
            patience: self.search.patience,
            max_steps: self.search.max_steps,
        }
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data).as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub id: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendRecord {
    #[serde(flatten)]
    pub id: CompressorId,
    pub settings: BackendSettings,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub measure: String,
    pub seed: u64,
    pub search: SearchStage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<InputRecord>,
    pub inputs: Vec<InputRecord>,
    pub score: f64,
    pub raw_cost: f64,
    pub outputs: Vec<InputRecord>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub newick: String,
    pub written: Vec<PathBuf>,
}

/// Best-effort version string for a backend; stable between runs.
fn backend_version(settings: &BackendSettings) -> String {
    match settings {
        BackendSettings::Lzss => format!("compsim-lzss {}", crate::compress::lzss::VERSION),
        BackendSettings::Deflate { .. } => "flate2 deflate".into(),
        BackendSettings::Command { argv, .. } => {
            let Some(prog) = argv.first() else { return "custom".into() };
            std::process::Command::new(prog)
                .arg("--version")
                .output()
                .ok()
                .and_then(|o| {
                    let text = [o.stdout, o.stderr].concat();
                    String::from_utf8_lossy(&text).lines().map(str::trim).find(|l| !l.is_empty()).map(String::from)
                })
                .unwrap_or_else(|| "unknown".into())
        }
    }
}

struct Stage {
    matrix: DistanceMatrix,
    measure: &'static str,
    backend: Option<BackendRecord>,
    snapshot: Option<InputRecord>,
    inputs: Vec<InputRecord>,
}

fn ncd_stage(s: &NcdStage) -> Result<Stage, PipelineError> {
    let corpus = load_corpus(&s.corpus)?;
    if corpus.len() < 4 {
        return Err(PipelineError::TooFew(corpus.len()));
    }
    let mut registry = BackendRegistry::with_defaults();
    if let Some(path) = &s.backends {
        registry.load_config(path)?;
    }
    let backend = registry.get(&s.backend)?;
    let matrix = ncd_matrix(&corpus, &backend, NcdOptions { calibrate: s.calibrate })?;
    let inputs = corpus
        .iter()
        .map(|o| InputRecord { id: o.id.clone(), bytes: o.data.len() as u64, sha256: sha256_hex(&o.data) })
        .collect();
    Ok(Stage {
        matrix,
        measure: "ncd",
        backend: Some(BackendRecord {
            id: backend.id().clone(),
            settings: backend.settings().clone(),
            version: backend_version(backend.settings()),
        }),
        snapshot: None,
        inputs,
    })
}

fn nwd_stage(s: &NwdStage) -> Result<Stage, PipelineError> {
    let raw = std::fs::read(&s.snapshot).map_err(io_err(&s.snapshot))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| PipelineError::Config(format!("{}: not UTF-8", s.snapshot.display())))?;
    let snapshot: CountSnapshot = text.parse()?;
    let terms = match (&s.terms, &s.terms_file) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(io_err(path))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect(),
        (None, None) => unreachable!("validated in from_toml"),
    };
    if terms.len() < 4 {
        return Err(PipelineError::TooFew(terms.len()));
    }
    let matrix = nwd_matrix(&snapshot, &terms, NwdOptions { clamp_negative: s.clamp_negative })?;
    let inputs = terms
        .iter()
        .map(|t| InputRecord { id: t.clone(), bytes: t.len() as u64, sha256: sha256_hex(t.as_bytes()) })
        .collect();
    let id = s.snapshot.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Stage {
        matrix,
        measure: "nwd",
        backend: None,
        snapshot: Some(InputRecord { id, bytes: raw.len() as u64, sha256: sha256_hex(&raw) }),
        inputs,
    })
}

/// Computes every artifact in memory, then writes them; on a write failure
/// the files already written are removed.
pub fn run(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let stage = match (&config.ncd, &config.nwd) {
        (Some(n), None) => ncd_stage(n)?,
        (None, Some(w)) => nwd_stage(w)?,
        _ => return Err(PipelineError::Config("exactly one of [ncd] or [nwd] is required".into())),
    };
    let phylip = stage.matrix.to_phylip()?;
    let on_disk = DistanceMatrix::from_phylip(&phylip)?;
    let result = hill_climb(&on_disk, &config.hill_climb_config())?;
    let newick = result.tree.to_newick();
    let tree_text = format!("{newick}\n");
    let trace_text = trace_csv(&result.trace);

    let files: [(&str, &str); 3] =
        [(MATRIX_FILE, &phylip), (TREE_FILE, &tree_text), (TRACE_FILE, &trace_text)];
    let manifest = Manifest {
        tool: "compsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        measure: stage.measure.into(),
        seed: config.seed,
        search: config.search,
        backend: stage.backend,
        snapshot: stage.snapshot,
        inputs: stage.inputs,
        score: result.score.score,
        raw_cost: result.score.raw_cost,
        outputs: files
            .iter()
            .map(|(name, text)| InputRecord {
                id: (*name).into(),
                bytes: text.len() as u64,
                sha256: sha256_hex(text.as_bytes()),
            })
            .collect(),
    };
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";

    let dir = &config.output;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, text) in files.iter().copied().chain([(MANIFEST_FILE, manifest_text.as_str())]) {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, text) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(io_err(&path)(e));
        }
        written.push(path);
    }
    Ok(RunSummary { manifest, newick, written })
}
