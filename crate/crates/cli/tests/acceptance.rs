//! Acceptance suite. Prints one line per criterion and exits non-zero if an
//! attainable criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use compsim_core::classify::{self, recipe, AccuracyReport, AnchorSet, Label, TrainConfig};
use compsim_core::compress::BackendRegistry;
use compsim_core::fixtures;
use compsim_core::ncd::{ncd_matrix, CorpusObject, NcdOptions};
use compsim_core::nwd::{check_normalization, nwd_counts, NwdOptions, NwdValue};
use compsim_core::quartet::{exhaustive_best_tree, hill_climb, HillClimbConfig, UnrootedTernaryTree};
use compsim_core::snapshot::CountSnapshot;

const NWD_EXPECTED: f64 = 0.443;
const NWD_TOLERANCE: f64 = 0.0005;
const NWD_BUDGET: Duration = Duration::from_secs(1);
const SCALE_TUPLES: usize = 1000;
const SCALE_FACTORS: [u64; 3] = [2, 10, 1000];
const SCALE_TOLERANCE: f64 = 1e-9;
const NCD_RANGE: (f64, f64) = (-0.1, 1.1);
const NCD_FILE_BYTES: usize = 4096;
const NCD_BUDGET: Duration = Duration::from_secs(30);
const ORACLE_FIVE: u64 = 100;
const ORACLE_SIX: u64 = 50;
const ORACLE_RATE: f64 = 0.95;
const ADDITIVE_RUNS: u64 = 25;
const QUARTET_BUDGET: Duration = Duration::from_secs(120);
const SCORE_TOLERANCE: f64 = 1e-12;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    check: fn() -> Outcome,
    attainable: bool,
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    if took > budget {
        return Err(format!("{detail}; took {took:.2?}, budget {budget:?}"));
    }
    Ok(format!("{detail}; {took:.2?}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn nwd_worked_example() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let snap = dir.path().join("counts.tsv");
    std::fs::write(&snap, "#N 8058044651\nhorse\t46700000\nrider\t12200000\nhorse\trider\t2630000\n")
        .map_err(|e| e.to_string())?;
    timed(NWD_BUDGET, || {
        let out = Command::new(env!("CARGO_BIN_EXE_compsim"))
            .args(["nwd", "horse", "rider", "--snapshot"])
            .arg(&snap)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
        let v: f64 = text.parse().map_err(|_| format!("unparsable output {text:?}"))?;
        ensure((v - NWD_EXPECTED).abs() <= NWD_TOLERANCE, || format!("{v} not within {NWD_TOLERANCE} of {NWD_EXPECTED}"))?;
        Ok(format!("nwd(horse, rider) = {text}"))
    })
}

fn degenerate_cases() -> Outcome {
    let opts = NwdOptions::default();
    let n = 1_000_000;
    let inf = nwd_counts(40, 70, 0, n, opts).map_err(|e| e.to_string())?;
    ensure(inf == NwdValue::Infinite, || format!("f(x,y)=0 gave {inf:?}"))?;
    let undef = nwd_counts(0, 0, 0, n, opts).map_err(|e| e.to_string())?;
    ensure(undef == NwdValue::Undefined, || format!("f(x)=f(y)=0 gave {undef:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (fx, fy) = (rng.gen_range(1..n), rng.gen_range(1..n));
        let fxy = rng.gen_range(1..=fx.min(fy));
        let v = nwd_counts(fx, fy, fxy, n, opts).map_err(|e| e.to_string())?;
        ensure(matches!(v, NwdValue::Finite(x) if x >= 0.0), || format!("({fx}, {fy}, {fxy}) gave {v:?}"))?;
    }
    Ok("infinite, undefined, and 1000 consistent tuples >= 0".into())
}

fn scale_invariance() -> Outcome {
    let opts = NwdOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..SCALE_TUPLES {
        let n: u64 = rng.gen_range(1_000..10_000_000_000);
        let fx = rng.gen_range(1..n);
        let fy = rng.gen_range(1..n);
        let fxy = rng.gen_range(1..=fx.min(fy));
        let base = nwd_counts(fx, fy, fxy, n, opts).map_err(|e| e.to_string())?;
        let base = base.as_f64().ok_or("non-finite base value")?;
        for c in SCALE_FACTORS {
            let scaled = nwd_counts(c * fx, c * fy, c * fxy, c * n, opts).map_err(|e| e.to_string())?;
            let d = (scaled.as_f64().ok_or("non-finite scaled value")? - base).abs();
            worst = worst.max(d);
        }
    }
    ensure(worst < SCALE_TOLERANCE, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e} over {SCALE_TUPLES} tuples x {SCALE_FACTORS:?}"))
}

fn mixed_corpus() -> Vec<CorpusObject> {
    let mut corpus = Vec::new();
    for i in 0..4u64 {
        corpus.push(CorpusObject::new(format!("text{i}"), fixtures::english(i, NCD_FILE_BYTES)));
        corpus.push(CorpusObject::new(format!("random{i}"), fixtures::random(i, NCD_FILE_BYTES)));
        corpus.push(CorpusObject::new(format!("repeat{i}"), fixtures::repetitive(i, NCD_FILE_BYTES)));
    }
    corpus
}

fn ncd_symmetry_and_range() -> Outcome {
    timed(NCD_BUDGET, || {
        let corpus = mixed_corpus();
        let backend = BackendRegistry::with_defaults().get("builtin").map_err(|e| e.to_string())?;
        let m = ncd_matrix(&corpus, &backend, NcdOptions::default()).map_err(|e| e.to_string())?;
        let n = m.len();
        for i in 0..n {
            for j in 0..n {
                ensure(m.get(i, j) == m.get(j, i), || format!("asymmetric at ({i}, {j})"))?;
                let v = m.get(i, j);
                ensure((NCD_RANGE.0..=NCD_RANGE.1).contains(&v), || format!("{v} out of range at ({i}, {j})"))?;
            }
        }
        let class = |i: usize| m.labels()[i].trim_end_matches(char::is_numeric).to_string();
        let mean = |a: &str, b: &str| {
            let vals: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && class(i) == a && class(j) == b)
                .map(|(i, j)| m.get(i, j))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let within = mean("text", "text");
        let cross = mean("text", "random");
        ensure(within < cross, || format!("text within {within:.4} >= text/random {cross:.4}"))?;
        Ok(format!("12 files symmetric and in range; text within {within:.4} < cross {cross:.4}"))
    })
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:02}")).collect()
}

fn quartet_oracle() -> Outcome {
    timed(QUARTET_BUDGET, || {
        let mut agree = 0u64;
        let mut total = 0u64;
        for (n, runs) in [(5, ORACLE_FIVE), (6, ORACLE_SIX)] {
            for seed in 0..runs {
                let m = fixtures::random_matrix(&labels(n), 1000 * n as u64 + seed);
                let (_, best) = exhaustive_best_tree(&m).map_err(|e| e.to_string())?;
                let found = hill_climb(&m, &HillClimbConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
                total += 1;
                if (found.score.score - best.score).abs() <= SCORE_TOLERANCE {
                    agree += 1;
                }
            }
        }
        let rate = agree as f64 / total as f64;
        ensure(rate >= ORACLE_RATE, || format!("agreement {agree}/{total}"))?;
        let mut recovered = 0;
        for n in 4..=7 {
            for seed in 0..ADDITIVE_RUNS {
                let (truth, m) = fixtures::additive_matrix(&labels(n), seed);
                let found = hill_climb(&m, &HillClimbConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
                ensure(found.score.score >= 1.0 - SCORE_TOLERANCE, || format!("n={n} seed={seed}: S = {}", found.score.score))?;
                ensure(found.tree.to_newick() == truth.to_newick(), || format!("n={n} seed={seed}: wrong topology"))?;
                recovered += 1;
            }
        }
        Ok(format!("exhaustive agreement {agree}/{total}; additive recovery {recovered}/{recovered}"))
    })
}

fn check_shape(t: &UnrootedTernaryTree, n: usize) -> Result<(), String> {
    ensure(t.leaf_count() == n, || format!("{} leaves, expected {n}", t.leaf_count()))?;
    ensure(t.internal_count() == n - 2, || format!("{} internal nodes for n = {n}", t.internal_count()))?;
    for v in 0..t.node_count() {
        let want = if t.is_leaf(v) { 1 } else { 3 };
        ensure(t.neighbors(v).len() == want, || format!("node {v} has degree {}", t.neighbors(v).len()))?;
    }
    Ok(())
}

fn tree_shape() -> Outcome {
    for n in 4..=16 {
        let m = fixtures::random_matrix(&labels(n), n as u64);
        let found = hill_climb(&m, &HillClimbConfig { seed: 1, patience: 2000, ..Default::default() })
            .map_err(|e| e.to_string())?;
        check_shape(&found.tree, n)?;
        let reparsed = UnrootedTernaryTree::from_newick(&found.tree.to_newick()).map_err(|e| e.to_string())?;
        check_shape(&reparsed, n)?;
    }
    Ok("n = 4..16 have n leaves and n-2 internal nodes of degree 3".into())
}

fn classifier_protocol() -> Outcome {
    let s = fixtures::prime_snapshot(0);
    let anchors = AnchorSet::new(recipe::ANCHORS).map_err(|e| e.to_string())?;
    let model =
        classify::train(&recipe::training(), &anchors, &s, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let report = classify::evaluate(&model, &recipe::test(), &s).map_err(|e| e.to_string())?;
    ensure(report.correct == report.total, || format!("test accuracy {}", report.accuracy_percent()))?;

    let items: Vec<(String, Label, Label)> = (0..19)
        .map(|i| {
            let truth = if i < 8 { Label::Positive } else { Label::Negative };
            let predicted = if i == 0 || i == 18 { truth.flipped() } else { truth };
            (i.to_string(), truth, predicted)
        })
        .collect();
    let confusion = AccuracyReport::from_predictions(items.iter().map(|(w, t, p)| (w.as_str(), *t, *p)));
    let line = confusion.to_string();
    let first = line.lines().next().unwrap_or_default();
    ensure(first == "accuracy\t17/19 = 89.47%", || format!("report line {first:?}"))?;
    Ok(format!("synthetic test {}/{} = {}; confusion fixture {first:?}", report.correct, report.total, report.accuracy_percent()))
}

fn mammal_phylogeny() -> Outcome {
    Err("not reproducible at desk scale (needs 20 mitochondrial genomes and a PPM-class compressor); \
         covered by additive recovery and the mixed-corpus NCD check"
        .into())
}

fn write_corpus(dir: &Path) -> std::io::Result<()> {
    let corpus = dir.join("corpus");
    std::fs::create_dir_all(&corpus)?;
    for o in mixed_corpus() {
        std::fs::write(corpus.join(&o.id), &o.data)?;
    }
    std::fs::write(dir.join("pipeline.toml"), "seed = 7\noutput = \"out\"\n\n[ncd]\ncorpus = \"corpus\"\n")
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_corpus(dir.path()).map_err(|e| e.to_string())?;
    let files = ["matrix.phylip", "tree.newick", "trace.csv", "manifest.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = Command::new(env!("CARGO_BIN_EXE_compsim"))
            .arg("run")
            .arg(dir.path().join("pipeline.toml"))
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let bytes = files
            .iter()
            .map(|f| std::fs::read(dir.path().join("out").join(f)).map_err(|e| format!("{f}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        std::fs::remove_dir_all(dir.path().join("out")).map_err(|e| e.to_string())?;
        runs.push(bytes);
    }
    for (i, f) in files.iter().enumerate() {
        ensure(runs[0][i] == runs[1][i], || format!("{f} differs between runs"))?;
    }
    Ok(format!("two runs byte-identical: {}", files.join(", ")))
}

fn g_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let terms: Vec<String> = (0..12).map(|i| format!("term{i}")).collect();
    let mut singles = Vec::new();
    let mut pairs = Vec::new();
    for (i, a) in terms.iter().enumerate() {
        singles.push((a, rng.gen_range(1_000u64..1_000_000)));
        for b in &terms[i + 1..] {
            pairs.push((a, b, rng.gen_range(1u64..1_000)));
        }
    }
    let total: u64 = singles.iter().map(|s| s.1).sum::<u64>() + pairs.iter().map(|p| p.2).sum::<u64>();
    let mut s = CountSnapshot::new(total).map_err(|e| e.to_string())?;
    for (t, c) in &singles {
        s.insert_single(t, *c).map_err(|e| e.to_string())?;
    }
    for (a, b, c) in &pairs {
        s.insert_pair(a, b, *c).map_err(|e| e.to_string())?;
    }
    let report = check_normalization(&s);
    ensure(report.residual < NORMALIZATION_TOLERANCE, || format!("sum of g = {}", report.total))?;
    Ok(format!("sum of g = {} (residual {:.1e})", report.total, report.residual))
}

fn main() {
    let criteria = [
        Criterion { name: "nwd-worked-example", check: nwd_worked_example, attainable: true },
        Criterion { name: "nwd-degenerate-cases", check: degenerate_cases, attainable: true },
        Criterion { name: "nwd-scale-invariance", check: scale_invariance, attainable: true },
        Criterion { name: "ncd-symmetry-range", check: ncd_symmetry_and_range, attainable: true },
        Criterion { name: "quartet-oracle", check: quartet_oracle, attainable: true },
        Criterion { name: "tree-shape", check: tree_shape, attainable: true },
        Criterion { name: "classifier-protocol", check: classifier_protocol, attainable: true },
        Criterion { name: "mammal-phylogeny", check: mammal_phylogeny, attainable: false },
        Criterion { name: "pipeline-determinism", check: pipeline_determinism, attainable: true },
        Criterion { name: "g-normalization", check: g_normalization, attainable: true },
    ];
    let mut unexpected = 0;
    for c in &criteria {
        match (c.check)() {
            Ok(detail) => println!("PASS {:<22} {detail}", c.name),
            Err(why) => {
                println!("FAIL {:<22} {why}", c.name);
                if c.attainable {
                    unexpected += 1;
                }
            }
        }
    }
    let passed = criteria.len() - criteria.iter().filter(|c| !c.attainable).count() - unexpected;
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
