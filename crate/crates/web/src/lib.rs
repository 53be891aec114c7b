//! WebAssembly bindings behind `www/index.html`.

use compsim_core::compress::{Backend, BackendRegistry};
use compsim_core::ncd::{ncd_from_lengths, ncd_matrix, CorpusObject, NcdOptions};
use compsim_core::nwd::{nwd_counts, NwdOptions, NwdValue};
use compsim_core::quartet::{hill_climb, HillClimbConfig};
use std::sync::Arc;
use wasm_bindgen::prelude::*;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

fn builtin() -> Result<Arc<Backend>, String> {
    BackendRegistry::with_defaults().get("builtin").map_err(|e| e.to_string())
}

fn count(name: &str, v: f64) -> Result<u64, String> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= (1u64 << 53) as f64 {
        Ok(v as u64)
    } else {
        Err(format!("{name} must be a whole number >= 0, got {v}"))
    }
}

pub fn nwd_text(fx: f64, fy: f64, fxy: f64, n: f64) -> Result<String, String> {
    let v = nwd_counts(count("f(x)", fx)?, count("f(y)", fy)?, count("f(x,y)", fxy)?, count("N", n)?, NwdOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(match v {
        NwdValue::Finite(x) => format!("{x:.4}"),
        NwdValue::Infinite => "inf".into(),
        NwdValue::Undefined => "undefined".into(),
    })
}

/// NWD from page counts, formatted as the CLI prints it: four decimals,
/// `inf`, or `undefined`.
#[wasm_bindgen]
pub fn nwd(fx: f64, fy: f64, fxy: f64, n: f64) -> Result<String, JsError> {
    nwd_text(fx, fy, fxy, n).map_err(js)
}

#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcdReport {
    pub zx: u32,
    pub zy: u32,
    pub zxy: u32,
    pub ncd: f64,
}

pub fn ncd_report(x: &str, y: &str) -> Result<NcdReport, String> {
    let backend = builtin()?;
    let z = |d: &[u8]| backend.compressed_length(d).map(|c| c.bytes_out as u32).map_err(|e| e.to_string());
    let joint = |a: &[u8], b: &[u8]| backend.concat_length(a, b).map(|c| c.bytes_out as u32).map_err(|e| e.to_string());
    let (x, y) = (x.as_bytes(), y.as_bytes());
    let (zx, zy) = (z(x)?, z(y)?);
    let zxy = joint(x, y)?.min(joint(y, x)?);
    Ok(NcdReport { zx, zy, zxy, ncd: ncd_from_lengths(zx as f64, zy as f64, zxy as f64) })
}

/// NCD of two texts with the builtin compressor, plus the lengths used.
#[wasm_bindgen]
pub fn ncd(x: &str, y: &str) -> Result<NcdReport, JsError> {
    ncd_report(x, y).map_err(js)
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub newick: String,
    pub score: f64,
    pub matrix: String,
}

/// Splits `label: text` lines into corpus objects. Lines without a label
/// are numbered.
fn snippets(text: &str) -> Vec<CorpusObject> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| match line.split_once(':') {
            Some((label, body)) if !label.trim().is_empty() && !label.trim().contains(char::is_whitespace) => {
                CorpusObject::new(label.trim(), body.trim())
            }
            _ => CorpusObject::new(format!("s{}", i + 1), line),
        })
        .collect()
}

pub fn cluster_text(text: &str, seed: u64) -> Result<Clustering, String> {
    let corpus = snippets(text);
    let m = ncd_matrix(&corpus, &*builtin()?, NcdOptions::default()).map_err(|e| e.to_string())?;
    let found = hill_climb(&m, &HillClimbConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
    Ok(Clustering {
        newick: found.tree.to_newick(),
        score: found.score.score,
        matrix: m.to_phylip().map_err(|e| e.to_string())?,
    })
}

/// Clusters one snippet per line into an unrooted quartet tree.
#[wasm_bindgen]
pub fn cluster(text: &str, seed: u32) -> Result<Clustering, JsError> {
    cluster_text(text, seed.into()).map_err(js)
}
