//! Exit codes: 0 success, 1 usage, 2 data, 3 provider or backend.

use std::fmt;

use compsim_core::classify::ClassifyError;
use compsim_core::compress::BackendError;
use compsim_core::matrix::MatrixError;
use compsim_core::ncd::NcdError;
use compsim_core::nwd::NwdError;
use compsim_core::pipeline::PipelineError;
use compsim_core::providers::ProviderError;
use compsim_core::quartet::QuartetError;
use compsim_core::snapshot::SnapshotError;

pub const OK: i32 = 0;
pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const PROVIDER: i32 = 3;

/// Marks an error as a usage problem.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn backend(e: &BackendError) -> i32 {
    match e {
        BackendError::Unknown(_) | BackendError::Duplicate(_) | BackendError::Config(_) => USAGE,
        _ => PROVIDER,
    }
}

fn provider(e: &ProviderError) -> i32 {
    match e {
        ProviderError::Lookup(_) | ProviderError::Snapshot(_) => DATA,
        ProviderError::Config(_) => USAGE,
        _ => PROVIDER,
    }
}

fn ncd(e: &NcdError) -> i32 {
    match e {
        NcdError::Backend(b) => backend(b),
        NcdError::Pair { .. } => PROVIDER,
        _ => DATA,
    }
}

/// Code for the first recognized error in the chain; data error otherwise.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            return backend(e);
        }
        if let Some(e) = cause.downcast_ref::<ProviderError>() {
            return provider(e);
        }
        if let Some(e) = cause.downcast_ref::<NcdError>() {
            return ncd(e);
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::Config(_) => USAGE,
                PipelineError::Backend(b) => backend(b),
                PipelineError::Ncd(n) => ncd(n),
                _ => DATA,
            };
        }
        if cause.is::<NwdError>()
            || cause.is::<SnapshotError>()
            || cause.is::<MatrixError>()
            || cause.is::<QuartetError>()
            || cause.is::<ClassifyError>()
        {
            return DATA;
        }
    }
    DATA
}
