//! Anchor-word features and a linear maximum-margin classifier.
//!
//! A word `w` becomes the vector `(NWD(w, a_1), ..., NWD(w, a_k))` for a
//! fixed list of anchor terms. The classifier is a soft-margin linear SVM
//! (hinge loss, bias folded in as a constant feature) trained by dual
//! coordinate descent with seeded shuffling.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nwd::{nwd, NwdError, NwdOptions, NwdValue};
use crate::par;
use crate::snapshot::CountSnapshot;

pub const MODEL_FORMAT: &str = "compsim-linear-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("anchor list is empty")]
    NoAnchors,
    #[error("duplicate anchor `{0}`")]
    DuplicateAnchor(String),
    #[error("NWD({word}, {anchor}): {source}")]
    Nwd {
        word: String,
        anchor: String,
        #[source]
        source: NwdError,
    },
    #[error("NWD({word}, {anchor}) is {value}; every feature must be finite")]
    NonFinite { word: String, anchor: String, value: &'static str },
    #[error("training data needs both classes, got only {0}")]
    SingleClass(Label),
    #[error("training data is empty")]
    Empty,
    #[error("{words} words but {labels} labels")]
    LabelCount { words: usize, labels: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model expects {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("model file: {0}")]
    Model(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ClassifyError + '_ {
    move |source| ClassifyError::Io { path: path.display().to_string(), source }
}

/// Ordered anchor terms; feature `i` is the distance to anchor `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AnchorSet(Vec<String>);

impl AnchorSet {
    pub fn new<S: Into<String>>(anchors: impl IntoIterator<Item = S>) -> Result<Self, ClassifyError> {
        let anchors: Vec<String> = anchors.into_iter().map(Into::into).collect();
        if anchors.is_empty() {
            return Err(ClassifyError::NoAnchors);
        }
        let mut seen = HashSet::new();
        for a in &anchors {
            if !seen.insert(a.as_str()) {
                return Err(ClassifyError::DuplicateAnchor(a.clone()));
            }
        }
        Ok(Self(anchors))
    }

    /// One anchor per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ClassifyError> {
        Self::new(content_lines(text).map(|(_, l)| l))
    }

    pub fn read(path: &Path) -> Result<Self, ClassifyError> {
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn terms(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same anchors reordered so that new position `i` holds old `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self(order.iter().map(|&i| self.0[i].clone()).collect())
    }
}

impl TryFrom<Vec<String>> for AnchorSet {
    type Error = ClassifyError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<AnchorSet> for Vec<String> {
    fn from(a: AnchorSet) -> Self {
        a.0
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Label {
    fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    /// Decision rule; a margin of exactly zero is positive.
    pub fn from_margin(margin: f64) -> Self {
        if margin >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "+",
            Label::Negative => "-",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Label::Positive),
            "-" => Ok(Label::Negative),
            _ => Err(format!("label must be `+` or `-`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledWord {
    pub label: Label,
    pub word: String,
}

impl LabeledWord {
    pub fn new(label: Label, word: impl Into<String>) -> Self {
        Self { label, word: word.into() }
    }
}

/// Lines `<+|->\t<word>`.
pub fn parse_labeled(text: &str) -> Result<Vec<LabeledWord>, ClassifyError> {
    content_lines(text)
        .map(|(line, l)| {
            let (label, word) = l
                .split_once('\t')
                .ok_or_else(|| ClassifyError::Parse { line, msg: "expected `<+|->\\t<word>`".into() })?;
            let label = label.trim().parse().map_err(|msg| ClassifyError::Parse { line, msg })?;
            let word = word.trim();
            if word.is_empty() {
                return Err(ClassifyError::Parse { line, msg: "empty word".into() });
            }
            Ok(LabeledWord::new(label, word))
        })
        .collect()
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledWord>, ClassifyError> {
    parse_labeled(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

/// One word per line.
pub fn parse_words(text: &str) -> Vec<String> {
    content_lines(text).map(|(_, l)| l.to_string()).collect()
}

pub fn write_labeled(words: &[LabeledWord]) -> String {
    words.iter().map(|w| format!("{}\t{}\n", w.label, w.word)).collect()
}

/// Row `j` holds `NWD(words[j], anchors[i])` for every anchor `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub words: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn feature_vector(word: &str, anchors: &AnchorSet, s: &CountSnapshot) -> Result<Vec<f64>, ClassifyError> {
    anchors
        .terms()
        .iter()
        .map(|a| {
            let v = nwd(s, word, a, NwdOptions::default()).map_err(|source| ClassifyError::Nwd {
                word: word.to_string(),
                anchor: a.clone(),
                source,
            })?;
            let bad = |value| ClassifyError::NonFinite { word: word.to_string(), anchor: a.clone(), value };
            match v {
                NwdValue::Finite(x) => Ok(x),
                NwdValue::Infinite => Err(bad("infinite")),
                NwdValue::Undefined => Err(bad("undefined")),
            }
        })
        .collect()
}

pub fn featurize(words: &[String], anchors: &AnchorSet, s: &CountSnapshot) -> Result<Features, ClassifyError> {
    let rows = par::map(words, |w| feature_vector(w, anchors, s)).into_iter().collect::<Result<_, _>>()?;
    Ok(Features { words: words.to_vec(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Soft-margin penalty `C`.
    pub regularization: f64,
    /// Maximum passes over the training data.
    pub epochs: usize,
    pub seed: u64,
    /// Stop once the projected-gradient spread falls below this.
    pub tolerance: f64,
    /// Rescale each feature to zero mean and unit variance first.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { regularization: 10.0, epochs: 1000, seed: 0, tolerance: 1e-6, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let k = rows[0].len();
        let m = rows.len() as f64;
        let mut mean = vec![0.0; k];
        let mut scale = vec![0.0; k];
        for i in 0..k {
            mean[i] = rows.iter().map(|r| r[i]).sum::<f64>() / m;
            let var = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / m;
            scale[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub anchors: AnchorSet,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Option<Standardization>,
    pub config: TrainConfig,
    pub training_accuracy: f64,
    pub epochs_run: usize,
}

impl TrainedModel {
    /// Signed distance-like score; `>= 0` means positive.
    pub fn margin(&self, x: &[f64]) -> Result<f64, ClassifyError> {
        if x.len() != self.weights.len() {
            return Err(ClassifyError::Dimension { expected: self.weights.len(), got: x.len() });
        }
        let x = match &self.standardization {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        };
        Ok(dot(&self.weights, &x) + self.bias)
    }

    pub fn classify(&self, x: &[f64]) -> Result<Label, ClassifyError> {
        Ok(Label::from_margin(self.margin(x)?))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ClassifyError::Model(e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(ClassifyError::Model(format!(
                "unsupported format {} v{}, expected {MODEL_FORMAT} v{MODEL_VERSION}",
                m.format, m.version
            )));
        }
        if m.weights.len() != m.anchors.len() {
            return Err(ClassifyError::Dimension { expected: m.anchors.len(), got: m.weights.len() });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains on feature rows with matching labels.
pub fn train_features(
    rows: &[Vec<f64>],
    labels: &[Label],
    anchors: &AnchorSet,
    config: &TrainConfig,
) -> Result<TrainedModel, ClassifyError> {
    if rows.len() != labels.len() {
        return Err(ClassifyError::LabelCount { words: rows.len(), labels: labels.len() });
    }
    if rows.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if let Some(r) = rows.iter().find(|r| r.len() != anchors.len()) {
        return Err(ClassifyError::Dimension { expected: anchors.len(), got: r.len() });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ClassifyError::SingleClass(labels[0]));
    }
    let standardization = config.standardize.then(|| Standardization::fit(rows));
    let xs: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut x = match &standardization {
                Some(s) => s.apply(r),
                None => r.clone(),
            };
            x.push(1.0);
            x
        })
        .collect();
    let ys: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let (w, epochs_run) = dual_cd(&xs, &ys, config);
    let k = anchors.len();
    let mut model = TrainedModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        anchors: anchors.clone(),
        weights: w[..k].to_vec(),
        bias: w[k],
        standardization,
        config: *config,
        training_accuracy: 0.0,
        epochs_run,
    };
    let correct = rows
        .iter()
        .zip(labels)
        .filter(|(r, &l)| model.classify(r).map(|p| p == l).unwrap_or(false))
        .count();
    model.training_accuracy = correct as f64 / rows.len() as f64;
    Ok(model)
}

/// Hinge-loss dual coordinate descent on augmented inputs.
fn dual_cd(xs: &[Vec<f64>], ys: &[f64], config: &TrainConfig) -> (Vec<f64>, usize) {
    let c = config.regularization;
    let dim = xs[0].len();
    let mut w = vec![0.0; dim];
    let mut alpha = vec![0.0; xs.len()];
    let q: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            if q[i] <= 0.0 {
                continue;
            }
            let g = ys[i] * dot(&w, &xs[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * ys[i];
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += step * xj;
                }
            }
        }
        if pg_max - pg_min < config.tolerance {
            return (w, epoch);
        }
    }
    (w, config.epochs)
}

/// Featurizes `words` and trains.
pub fn train(
    words: &[LabeledWord],
    anchors: &AnchorSet,
    s: &CountSnapshot,
    config: &TrainConfig,
) -> Result<TrainedModel, ClassifyError> {
    let names: Vec<String> = words.iter().map(|w| w.word.clone()).collect();
    let labels: Vec<Label> = words.iter().map(|w| w.label).collect();
    let f = featurize(&names, anchors, s)?;
    train_features(&f.rows, &labels, anchors, config)
}

pub fn predict(model: &TrainedModel, word: &str, s: &CountSnapshot) -> Result<Label, ClassifyError> {
    model.classify(&feature_vector(word, &model.anchors, s)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccuracyReport {
    pub total: usize,
    pub correct: usize,
    pub false_positives: Vec<String>,
    pub false_negatives: Vec<String>,
}

impl AccuracyReport {
    /// From `(word, truth, predicted)` triples.
    pub fn from_predictions<'a>(items: impl IntoIterator<Item = (&'a str, Label, Label)>) -> Self {
        let mut r = Self { total: 0, correct: 0, false_positives: Vec::new(), false_negatives: Vec::new() };
        for (word, truth, predicted) in items {
            r.total += 1;
            match (truth, predicted) {
                (t, p) if t == p => r.correct += 1,
                (Label::Negative, _) => r.false_positives.push(word.to_string()),
                (Label::Positive, _) => r.false_negatives.push(word.to_string()),
            }
        }
        r
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.correct as f64 / self.total as f64
    }

    /// Percentage with two decimals, e.g. `89.47%`.
    pub fn accuracy_percent(&self) -> String {
        format!("{:.2}%", 100.0 * self.accuracy())
    }
}

impl fmt::Display for AccuracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy\t{}/{} = {}", self.correct, self.total, self.accuracy_percent())?;
        writeln!(f, "false_positives\t{}", self.false_positives.join(" "))?;
        writeln!(f, "false_negatives\t{}", self.false_negatives.join(" "))
    }
}

pub fn evaluate(
    model: &TrainedModel,
    words: &[LabeledWord],
    s: &CountSnapshot,
) -> Result<AccuracyReport, ClassifyError> {
    let predicted = par::map(words, |w| predict(model, &w.word, s)).into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(AccuracyReport::from_predictions(
        words.iter().zip(predicted).map(|(w, p)| (w.word.as_str(), w.label, p)),
    ))
}

/// Word lists of the prime-number classification experiment.
pub mod recipe {
    use super::{Label, LabeledWord};

    pub const ANCHORS: [&str; 5] = ["composite", "number", "orange", "prime", "record"];

    pub const TRAIN_POSITIVE: [&str; 21] = [
        "11", "13", "17", "19", "2", "23", "29", "3", "31", "37", "41", "43", "47", "5", "53", "59",
        "61", "67", "7", "71", "73",
    ];

    pub const TRAIN_NEGATIVE: [&str; 22] = [
        "10", "12", "14", "15", "16", "18", "20", "21", "22", "24", "25", "26", "27", "28", "30",
        "32", "33", "34", "4", "6", "8", "9",
    ];

    pub const TEST_POSITIVE: [&str; 8] = ["101", "103", "107", "109", "79", "83", "89", "97"];

    pub const TEST_NEGATIVE: [&str; 11] =
        ["110", "36", "38", "40", "42", "44", "45", "46", "48", "49", "91"];

    fn labeled(pos: &[&str], neg: &[&str]) -> Vec<LabeledWord> {
        pos.iter()
            .map(|w| LabeledWord::new(Label::Positive, *w))
            .chain(neg.iter().map(|w| LabeledWord::new(Label::Negative, *w)))
            .collect()
    }

    pub fn training() -> Vec<LabeledWord> {
        labeled(&TRAIN_POSITIVE, &TRAIN_NEGATIVE)
    }

    pub fn test() -> Vec<LabeledWord> {
        labeled(&TEST_POSITIVE, &TEST_NEGATIVE)
    }
}
