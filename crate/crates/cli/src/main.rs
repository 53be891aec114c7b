mod exit;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use compsim_core::classify::{self, AnchorSet, TrainConfig, TrainedModel};
use compsim_core::compress::{Backend, BackendRegistry};
use compsim_core::matrix::{fmt_value, DistanceMatrix};
use compsim_core::ncd::{load_corpus, ncd_matrix, ncd_pair, CorpusObject, NcdOptions};
use compsim_core::nwd::{nwd, nwd_matrix, NwdOptions, NwdValue};
use compsim_core::pipeline::{self, PipelineConfig};
use compsim_core::providers::{
    build_snapshot, NormalizerPolicy, PairMode, ProviderConfig, ProviderKind,
};
use compsim_core::quartet::{exhaustive_best_tree, hill_climb, trace_csv, HillClimbConfig};
use compsim_core::snapshot::CountSnapshot;

use exit::usage;

/// Similarity from compression and page counts, quartet-tree clustering,
/// anchor-word classification.
#[derive(Parser)]
#[command(name = "compsim", version, propagate_version = true, arg_required_else_help = true)]
struct Cli {
    /// Worker threads for matrix and search work [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Extra compressor definitions (TOML, `[[backend]]` entries)
    #[arg(long, global = true, value_name = "FILE")]
    backends: Option<PathBuf>,
    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compressed length of a file in bytes
    Zlen {
        file: PathBuf,
        #[arg(long, default_value = "builtin")]
        backend: String,
    },
    /// NCD between two files
    Ncd {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        opts: NcdArgs,
    },
    /// NCD matrix over a directory or a file list
    NcdMatrix {
        /// Directory (every regular file) or a text file listing paths
        corpus: PathBuf,
        #[command(flatten)]
        opts: NcdArgs,
        #[command(flatten)]
        out: MatrixOut,
    },
    /// NWD between two terms
    Nwd {
        a: String,
        b: String,
        #[command(flatten)]
        counts: CountSource,
        /// Report negative values from noisy counts as 0
        #[arg(long)]
        clamp_negative: bool,
    },
    /// NWD matrix over a list of terms
    NwdMatrix {
        /// One term per line
        #[arg(long)]
        terms: PathBuf,
        #[command(flatten)]
        counts: CountSource,
        #[arg(long)]
        clamp_negative: bool,
        #[command(flatten)]
        out: MatrixOut,
    },
    /// Query a count provider and write a snapshot file
    FetchCounts {
        /// One term per line
        #[arg(long)]
        terms: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
        /// Fetch only term-anchor pairs for these anchors (one per line)
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Normalizer N; overrides the provider's reported index size
        #[arg(long)]
        normalizer: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a quartet tree from a distance matrix
    Cluster {
        /// Phylip square matrix
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Newick output; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV of (step, score) for accepted hill-climbing steps
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = HillClimbConfig::default().restarts)]
        restarts: usize,
        /// Stop a climb after this many consecutive non-improving steps
        #[arg(long, default_value_t = HillClimbConfig::default().patience)]
        patience: u64,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Score every topology instead (at most 7 leaves)
        #[arg(long, conflicts_with_all = ["trace"])]
        exhaustive: bool,
    },
    /// Anchor-word classification
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Run a pipeline config end to end (matrix, tree, manifest)
    Run {
        config: PathBuf,
        /// Override the config's seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum ClassifyCommand {
    /// Train a linear classifier from labeled words
    Train {
        /// Lines `<+|->\t<word>`
        #[arg(long)]
        train: PathBuf,
        /// One anchor per line, order significant
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Soft-margin penalty C
        #[arg(long, default_value_t = TrainConfig::default().regularization)]
        c: f64,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        /// Standardize features before training
        #[arg(long)]
        standardize: bool,
    },
    /// Label words with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// One word per line
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Accuracy of a model on labeled words
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Lines `<+|->\t<word>`
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
    },
}

#[derive(Args)]
struct NcdArgs {
    #[arg(long, default_value = "builtin")]
    backend: String,
    /// Subtract the compressed length of the empty input
    #[arg(long)]
    calibrate: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Phylip,
    Csv,
}

#[derive(Args)]
struct MatrixOut {
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "phylip")]
    format: MatrixFormat,
}

#[derive(Args)]
struct ProviderArgs {
    /// Count provider kind
    #[arg(long, value_enum)]
    provider: Option<Kind>,
    /// Provider settings (TOML)
    #[arg(long, value_name = "FILE")]
    provider_config: Option<PathBuf>,
    /// Persistent count cache
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Snapshot backing the fixture provider
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct CountSource {
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Live,
    Fixture,
}

impl ProviderArgs {
    fn config(&self) -> Result<ProviderConfig> {
        let mut cfg = match &self.provider_config {
            Some(p) => ProviderConfig::load(p)?,
            None => match (self.provider, &self.snapshot) {
                (Some(Kind::Live), _) => {
                    return Err(usage("--provider live needs --provider-config with a [live] section"))
                }
                (_, Some(s)) => ProviderConfig::fixture(s),
                (_, None) => return Err(usage("give --snapshot or --provider with --provider-config")),
            },
        };
        if let Some(k) = self.provider {
            cfg.kind = match k {
                Kind::Live => ProviderKind::Live,
                Kind::Fixture => ProviderKind::Fixture,
            };
        }
        if let (ProviderKind::Fixture, Some(s)) = (cfg.kind, &self.snapshot) {
            cfg.fixture = Some(s.clone());
        }
        if self.cache.is_some() {
            cfg.cache = self.cache.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl CountSource {
    /// A snapshot file directly, or a snapshot assembled from a provider.
    fn snapshot(&self, terms: &[String]) -> Result<CountSnapshot> {
        let p = &self.provider;
        if p.provider.is_none() && p.provider_config.is_none() {
            let path = p.snapshot.as_ref().ok_or_else(|| usage("give --snapshot or --provider"))?;
            return read_snapshot(path);
        }
        let cfg = p.config()?;
        let provider = cfg.open()?;
        Ok(build_snapshot(provider.as_ref(), terms, &PairMode::AllPairs, cfg.normalizer)?)
    }
}

fn read_snapshot(path: &Path) -> Result<CountSnapshot> {
    CountSnapshot::read(path).with_context(|| format!("reading snapshot {}", path.display()))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(classify::parse_words(&text))
}

fn registry(cli: &Cli) -> Result<BackendRegistry> {
    let mut r = BackendRegistry::with_defaults();
    if let Some(path) = &cli.backends {
        r.load_config(path)?;
    }
    Ok(r)
}

fn backend(cli: &Cli, name: &str) -> Result<std::sync::Arc<Backend>> {
    Ok(registry(cli)?.get(name)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_matrix(m: &DistanceMatrix, out: &MatrixOut) -> Result<()> {
    let text = match out.format {
        MatrixFormat::Phylip => m.to_phylip()?,
        MatrixFormat::Csv => m.to_csv()?,
    };
    emit(out.out.as_deref(), &text)
}

fn nwd_text(v: NwdValue) -> String {
    match v {
        NwdValue::Finite(x) => format!("{x:.4}"),
        NwdValue::Infinite => "inf".into(),
        NwdValue::Undefined => "undefined".into(),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Zlen { file, backend: name } => {
            let data = std::fs::read(file).with_context(|| format!("reading {}", file.display()))?;
            let b = backend(cli, name)?;
            b.check_window(data.len());
            println!("{}", b.compressed_length(&data)?.bytes_out);
        }
        Command::Ncd { a, b, opts } => {
            let x = CorpusObject::from_file(a)?;
            let y = CorpusObject::from_file(b)?;
            let be = backend(cli, &opts.backend)?;
            let d = ncd_pair(&x, &y, &be, NcdOptions { calibrate: opts.calibrate })?;
            println!("{d:.4}");
        }
        Command::NcdMatrix { corpus, opts, out } => {
            let objects = load_corpus(corpus)?;
            let be = backend(cli, &opts.backend)?;
            let m = ncd_matrix(&objects, &be, NcdOptions { calibrate: opts.calibrate })?;
            let diag = m.diagnostics();
            log::info!(
                "diagonal min {} max {}, {} pairs out of range, {} triangle violations",
                fmt_value(diag.diagonal_min),
                fmt_value(diag.diagonal_max),
                diag.out_of_range,
                diag.triangle_violations
            );
            emit_matrix(&m, out)?;
        }
        Command::Nwd { a, b, counts, clamp_negative } => {
            let s = counts.snapshot(&[a.clone(), b.clone()])?;
            let v = nwd(&s, a, b, NwdOptions { clamp_negative: *clamp_negative })?;
            println!("{}", nwd_text(v));
        }
        Command::NwdMatrix { terms, counts, clamp_negative, out } => {
            let terms = read_lines(terms)?;
            let s = counts.snapshot(&terms)?;
            let m = nwd_matrix(&s, &terms, NwdOptions { clamp_negative: *clamp_negative })?;
            emit_matrix(&m, out)?;
        }
        Command::FetchCounts { terms, provider, anchors, normalizer, out } => {
            let terms = read_lines(terms)?;
            let mut cfg = provider.config()?;
            if let Some(n) = normalizer {
                cfg.normalizer = NormalizerPolicy::Fixed(*n);
            }
            let mode = match anchors {
                Some(path) => PairMode::Anchored(read_lines(path)?),
                None => PairMode::AllPairs,
            };
            let p = cfg.open()?;
            let snapshot = build_snapshot(p.as_ref(), &terms, &mode, cfg.normalizer)?;
            snapshot.write(out)?;
            log::info!(
                "wrote {} singletons and {} pairs to {}",
                snapshot.singles().count(),
                snapshot.pairs().count(),
                out.display()
            );
        }
        Command::Cluster { matrix, seed, out, trace, restarts, patience, max_steps, exhaustive } => {
            let text = std::fs::read_to_string(matrix)
                .with_context(|| format!("reading {}", matrix.display()))?;
            let m = DistanceMatrix::from_phylip(&text)?;
            let (tree, score, steps) = if *exhaustive {
                let (t, s) = exhaustive_best_tree(&m)?;
                (t, s, None)
            } else {
                let cfg = HillClimbConfig {
                    seed: *seed,
                    restarts: *restarts,
                    patience: *patience,
                    max_steps: *max_steps,
                };
                let r = hill_climb(&m, &cfg)?;
                (r.tree, r.score, Some(r.trace))
            };
            if let (Some(path), Some(steps)) = (trace, &steps) {
                std::fs::write(path, trace_csv(steps))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            log::info!("S(T) = {:.6} after {} evaluations", score.score, score.evaluations);
            emit(out.as_deref(), &format!("{}\n", tree.to_newick()))?;
        }
        Command::Classify(c) => classify_cmd(c)?,
        Command::Run { config, seed } => {
            let mut cfg = PipelineConfig::load(config)?;
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            let summary = pipeline::run(&cfg)?;
            log::info!("S(T) = {:.6}", summary.manifest.score);
            for p in &summary.written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn classify_cmd(c: &ClassifyCommand) -> Result<()> {
    match c {
        ClassifyCommand::Train { train, anchors, snapshot, model, seed, c, epochs, standardize } => {
            let words = classify::read_labeled(train)?;
            let anchors = AnchorSet::read(anchors)?;
            let s = read_snapshot(snapshot)?;
            let cfg = TrainConfig {
                regularization: *c,
                epochs: *epochs,
                seed: *seed,
                standardize: *standardize,
                ..Default::default()
            };
            let m = classify::train(&words, &anchors, &s, &cfg)?;
            m.save(model)?;
            println!("training_accuracy\t{:.2}%", 100.0 * m.training_accuracy);
        }
        ClassifyCommand::Predict { model, words, snapshot } => {
            let m = TrainedModel::load(model)?;
            let s = read_snapshot(snapshot)?;
            let mut out = String::new();
            for w in read_lines(words)? {
                out.push_str(&format!("{}\t{}\n", classify::predict(&m, &w, &s)?, w));
            }
            emit(None, &out)?;
        }
        ClassifyCommand::Evaluate { model, test, snapshot } => {
            let m = TrainedModel::load(model)?;
            let s = read_snapshot(snapshot)?;
            let words = classify::read_labeled(test)?;
            if words.is_empty() {
                return Err(usage("test set is empty"));
            }
            emit(None, &classify::evaluate(&m, &words, &s)?.to_string())?;
        }
    }
    Ok(())
}

/// The error chain joined by `: `, skipping causes a parent already quotes.
fn render(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(exit::USAGE as u8);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("pool is built once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit::code_for(&e) as u8)
        }
    }
}
