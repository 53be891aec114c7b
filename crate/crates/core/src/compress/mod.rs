//! Compressed-length oracles.
//!
//! Every backend answers one question: how many bytes does the emitted
//! stream for `x` occupy? Backends are registered by name in a
//! [`BackendRegistry`] and are immutable once registered.

mod external;
pub mod lzss;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::CommandBackend;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend `{0}` is already registered")]
    Duplicate(String),
    #[error("no backend named `{0}`")]
    Unknown(String),
    #[error("backend `{name}` failed: {reason}")]
    Failed { name: String, reason: String },
    #[error("invalid backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DictionaryWindow,
    BlockSorting,
    StatisticalContext,
    BuiltinReference,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::DictionaryWindow => "dictionary-window",
            Family::BlockSorting => "block-sorting",
            Family::StatisticalContext => "statistical-context",
            Family::BuiltinReference => "builtin-reference",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dictionary-window" => Ok(Family::DictionaryWindow),
            "block-sorting" => Ok(Family::BlockSorting),
            "statistical-context" => Ok(Family::StatisticalContext),
            "builtin-reference" => Ok(Family::BuiltinReference),
            other => Err(BackendError::Config(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressorId {
    pub name: String,
    pub family: Family,
}

impl CompressorId {
    pub fn new(name: impl Into<String>, family: Family) -> Self {
        Self { name: name.into(), family }
    }
}

impl fmt::Display for CompressorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name, self.family)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedLength {
    pub bytes_in: usize,
    pub bytes_out: usize,
    pub compressor: CompressorId,
}

/// How a backend produces its stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSettings {
    /// The in-crate LZSS coder; fixed 32 KiB window.
    Lzss,
    /// DEFLATE via zlib at the given level (0..=9), raw stream without container.
    Deflate { level: u32 },
    /// An external program that reads the input on stdin and writes the
    /// compressed stream to stdout.
    Command {
        argv: Vec<String>,
        #[serde(default)]
        window: Option<usize>,
    },
}

/// Anything that maps bytes to a compressed stream.
pub trait Compressor: Send + Sync {
    fn compress(&self, data: &[u8]) -> Result<Vec<u8>, String>;

    /// Bytes of history the coder can reference, if bounded.
    fn window(&self) -> Option<usize> {
        None
    }
}

struct Lzss;

impl Compressor for Lzss {
    fn compress(&self, data: &[u8]) -> Result<Vec<u8>, String> {
        Ok(lzss::compress(data))
    }

    fn window(&self) -> Option<usize> {
        Some(lzss::WINDOW)
    }
}

struct Deflate {
    level: u32,
}

impl Compressor for Deflate {
    fn compress(&self, data: &[u8]) -> Result<Vec<u8>, String> {
        let mut enc =
            flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::new(self.level));
        enc.write_all(data).map_err(|e| e.to_string())?;
        enc.finish().map_err(|e| e.to_string())
    }

    fn window(&self) -> Option<usize> {
        Some(32 * 1024)
    }
}

/// A registered backend: identity, frozen settings and implementation.
pub struct Backend {
    id: CompressorId,
    settings: BackendSettings,
    imp: Box<dyn Compressor>,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend")
            .field("id", &self.id)
            .field("settings", &self.settings)
            .finish()
    }
}

impl Backend {
    pub fn new(id: CompressorId, settings: BackendSettings) -> Result<Self, BackendError> {
        let imp: Box<dyn Compressor> = match &settings {
            BackendSettings::Lzss => Box::new(Lzss),
            BackendSettings::Deflate { level } => {
                if *level > 9 {
                    return Err(BackendError::Config(format!("deflate level {level} > 9")));
                }
                Box::new(Deflate { level: *level })
            }
            BackendSettings::Command { argv, window } => {
                Box::new(CommandBackend::new(argv.clone(), *window)?)
            }
        };
        Ok(Self { id, settings, imp })
    }

    /// Wraps an arbitrary coder, e.g. a test double.
    pub fn custom(id: CompressorId, imp: Box<dyn Compressor>) -> Self {
        Self {
            id,
            settings: BackendSettings::Command { argv: Vec::new(), window: imp.window() },
            imp,
        }
    }

    pub fn id(&self) -> &CompressorId {
        &self.id
    }

    pub fn settings(&self) -> &BackendSettings {
        &self.settings
    }

    pub fn window(&self) -> Option<usize> {
        self.imp.window()
    }

    pub fn compressed_length(&self, x: &[u8]) -> Result<CompressedLength, BackendError> {
        let out = self.imp.compress(x).map_err(|reason| BackendError::Failed {
            name: self.id.name.clone(),
            reason,
        })?;
        Ok(CompressedLength {
            bytes_in: x.len(),
            bytes_out: out.len(),
            compressor: self.id.clone(),
        })
    }

    /// Compressed length of `x` immediately followed by `y`, no separator.
    pub fn concat_length(&self, x: &[u8], y: &[u8]) -> Result<CompressedLength, BackendError> {
        let mut xy = Vec::with_capacity(x.len() + y.len());
        xy.extend_from_slice(x);
        xy.extend_from_slice(y);
        self.compressed_length(&xy)
    }

    /// Logs a warning when `len` bytes cannot fit in the coder's history.
    pub fn check_window(&self, len: usize) -> bool {
        match self.window() {
            Some(w) if len > w => {
                log::warn!(
                    "input of {len} bytes exceeds the {w}-byte window of backend `{}`; \
                     distances will be inflated",
                    self.id.name
                );
                false
            }
            _ => true,
        }
    }
}

/// One `[[backend]]` entry of a backend config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendEntry {
    pub name: String,
    pub family: Family,
    /// Builtin marker: `lzss` or `deflate`.
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub command: Option<Vec<String>>,
    #[serde(default)]
    pub level: Option<u32>,
    #[serde(default)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendEntry>,
}

impl BackendEntry {
    pub fn settings(&self) -> Result<BackendSettings, BackendError> {
        match (&self.builtin, &self.command) {
            (Some(b), None) => match b.as_str() {
                "lzss" => Ok(BackendSettings::Lzss),
                "deflate" => Ok(BackendSettings::Deflate { level: self.level.unwrap_or(9) }),
                other => Err(BackendError::Config(format!(
                    "backend `{}`: unknown builtin `{other}`",
                    self.name
                ))),
            },
            (None, Some(argv)) => {
                Ok(BackendSettings::Command { argv: argv.clone(), window: self.window })
            }
            _ => Err(BackendError::Config(format!(
                "backend `{}` needs exactly one of `builtin` or `command`",
                self.name
            ))),
        }
    }
}

impl FromStr for BackendConfig {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        toml::from_str(s).map_err(|e| BackendError::Config(e.to_string()))
    }
}

/// Name-indexed set of backends.
#[derive(Debug, Default, Clone)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<Backend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `builtin`, `deflate`, and subprocess adapters for `gzip`, `bzip2`
    /// and `xz`. The subprocess ones only fail when used without the binary.
    pub fn with_defaults() -> Self {
        let mut reg = Self::new();
        let defaults = [
            (CompressorId::new("builtin", Family::BuiltinReference), BackendSettings::Lzss),
            (
                CompressorId::new("deflate", Family::DictionaryWindow),
                BackendSettings::Deflate { level: 9 },
            ),
            (
                CompressorId::new("gzip", Family::DictionaryWindow),
                BackendSettings::Command {
                    argv: vec!["gzip".into(), "-c".into(), "-9".into(), "-n".into()],
                    window: Some(32 * 1024),
                },
            ),
            (
                CompressorId::new("bzip2", Family::BlockSorting),
                BackendSettings::Command {
                    argv: vec!["bzip2".into(), "-c".into(), "-9".into()],
                    window: Some(900_000),
                },
            ),
            (
                CompressorId::new("xz", Family::DictionaryWindow),
                BackendSettings::Command {
                    argv: vec!["xz".into(), "-c".into(), "-9".into(), "--format=raw".into()],
                    window: Some(64 << 20),
                },
            ),
        ];
        for (id, settings) in defaults {
            reg.register(id, settings).expect("default backends are valid and unique");
        }
        reg
    }

    pub fn register(
        &mut self,
        id: CompressorId,
        settings: BackendSettings,
    ) -> Result<Arc<Backend>, BackendError> {
        if self.backends.contains_key(&id.name) {
            return Err(BackendError::Duplicate(id.name));
        }
        let backend = Arc::new(Backend::new(id, settings)?);
        self.backends.insert(backend.id.name.clone(), Arc::clone(&backend));
        Ok(backend)
    }

    pub fn insert(&mut self, backend: Backend) -> Result<Arc<Backend>, BackendError> {
        if self.backends.contains_key(&backend.id.name) {
            return Err(BackendError::Duplicate(backend.id.name.clone()));
        }
        let backend = Arc::new(backend);
        self.backends.insert(backend.id.name.clone(), Arc::clone(&backend));
        Ok(backend)
    }

    pub fn apply_config(&mut self, config: &BackendConfig) -> Result<(), BackendError> {
        for entry in &config.backends {
            let id = CompressorId::new(entry.name.clone(), entry.family);
            self.register(id, entry.settings()?)?;
        }
        Ok(())
    }

    pub fn load_config(&mut self, path: &Path) -> Result<(), BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        self.apply_config(&text.parse()?)
    }

    pub fn get(&self, name: &str) -> Result<Arc<Backend>, BackendError> {
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| BackendError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}
