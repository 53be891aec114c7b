use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use compsim_core::classify::{recipe, write_labeled};
use compsim_core::fixtures;
use compsim_core::matrix::DistanceMatrix;
use compsim_core::quartet::UnrootedTernaryTree;
use compsim_core::snapshot::CountSnapshot;

fn compsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compsim"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn paper_snapshot(dir: &Path) -> PathBuf {
    let path = dir.join("paper.tsv");
    std::fs::write(
        &path,
        "#N 8058044651\nhorse\t46700000\nrider\t12200000\nhorse\trider\t2630000\n",
    )
    .unwrap();
    path
}

#[test]
fn nwd_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let snap = paper_snapshot(dir.path());
    let o = compsim(&["nwd", "horse", "rider", "--snapshot", p(&snap)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "0.4431\n");
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.443).abs() < 0.0005);
}

#[test]
fn nwd_degenerate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("s.tsv");
    std::fs::write(&snap, "#N 1000\na\t10\nb\t20\nz\t0\ny\t0\n").unwrap();
    let o = compsim(&["nwd", "a", "b", "--snapshot", p(&snap)]);
    assert_eq!(code(&o), 2, "missing pair is a data error");
    std::fs::write(&snap, "#N 1000\na\t10\nb\t20\nz\t0\ny\t0\na\tb\t0\ny\tz\t0\n").unwrap();
    let o = compsim(&["nwd", "a", "b", "--snapshot", p(&snap)]);
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "inf\n"));
    let o = compsim(&["nwd", "y", "z", "--snapshot", p(&snap)]);
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "undefined\n"));
}

#[test]
fn usage_and_version() {
    let o = compsim(&[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    let o = compsim(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    let o = compsim(&["--version"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), format!("compsim {}\n", env!("CARGO_PKG_VERSION")));
    for sub in [
        "zlen", "ncd", "ncd-matrix", "nwd", "nwd-matrix", "fetch-counts", "cluster", "classify", "run",
    ] {
        let o = compsim(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    let o = compsim(&["cluster"]);
    assert_eq!(code(&o), 1, "missing required flag");
    let o = compsim(&["--jobs", "0", "zlen", "x"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn zlen_and_ncd() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    std::fs::write(&a, fixtures::english(0, 10 * 1024)).unwrap();
    let o = compsim(&["zlen", p(&a), "--backend", "builtin"]);
    assert_eq!(code(&o), 0);
    let z: usize = stdout(&o).trim().parse().unwrap();
    assert!(z > 0 && z < 10 * 1024);
    let o = compsim(&["zlen", p(&a), "--backend", "deflate"]);
    assert_eq!(code(&o), 0);

    let o = compsim(&["ncd", p(&a), p(&a), "--backend", "builtin"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "0.0241\n");

    let o = compsim(&["ncd", p(&a), "/nonexistent/file"]);
    assert_eq!(code(&o), 2);
    let o = compsim(&["zlen", p(&a), "--backend", "nope"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn failing_backend_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    std::fs::write(&a, "hello").unwrap();
    let cfg = dir.path().join("backends.toml");
    std::fs::write(&cfg, "[[backend]]\nname = \"broken\"\nfamily = \"dictionary-window\"\ncommand = [\"/nonexistent/bin/zip\"]\n").unwrap();
    let o = compsim(&["--backends", p(&cfg), "zlen", p(&a), "--backend", "broken"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("broken"));
}

#[test]
fn ncd_matrix_formats() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for i in 0..4u64 {
        std::fs::write(corpus.join(format!("t{i}")), fixtures::english(i, 3000)).unwrap();
    }
    let o = compsim(&["ncd-matrix", p(&corpus)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = DistanceMatrix::from_phylip(&stdout(&o)).unwrap();
    assert_eq!(m.labels(), ["t0", "t1", "t2", "t3"]);
    let out = dir.path().join("m.csv");
    let o = compsim(&["ncd-matrix", p(&corpus), "--format", "csv", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("label,t0,t1,t2,t3\nt0,"));
}

#[test]
fn nwd_matrix_marks_infinite() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("s.tsv");
    std::fs::write(&snap, "#N 1000\na\t10\nb\t20\nc\t30\na\tb\t5\na\tc\t0\nb\tc\t7\n").unwrap();
    let terms = dir.path().join("terms.txt");
    std::fs::write(&terms, "a\nb\nc\n").unwrap();
    let o = compsim(&["nwd-matrix", "--terms", p(&terms), "--snapshot", p(&snap), "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().nth(1).unwrap().ends_with(",inf"), "{text}");
}

#[test]
fn fetch_counts_from_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.tsv");
    fixtures::prime_snapshot(0).write(&big).unwrap();
    let terms = dir.path().join("terms.txt");
    std::fs::write(&terms, "2\n3\n4\n").unwrap();
    let anchors = dir.path().join("anchors.txt");
    std::fs::write(&anchors, recipe::ANCHORS.join("\n")).unwrap();
    let out = dir.path().join("snap.tsv");
    let o = compsim(&[
        "fetch-counts", "--terms", p(&terms), "--provider", "fixture", "--snapshot", p(&big),
        "--anchors", p(&anchors), "--out", p(&out), "--normalizer", "10000000000",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = CountSnapshot::read(&out).unwrap();
    assert_eq!(s.singles().count(), 8);
    assert_eq!(s.pairs().count(), 15);
    assert_eq!(s.normalizer(), 10_000_000_000);

    // All pairs among the terms are not in the fixture.
    let o = compsim(&[
        "fetch-counts", "--terms", p(&terms), "--provider", "fixture", "--snapshot", p(&big), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 2);
    let o = compsim(&["fetch-counts", "--terms", p(&terms), "--provider", "live", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
}

/// Serves `{"total": <len(query)>}` for every request, up to `n` requests.
fn count_server(n: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h == "\r\n" || h.is_empty() {
                    break;
                }
            }
            let target = request_line.split_whitespace().nth(1).unwrap().to_string();
            let body = format!("{{\"total\": \"{}\"}}", target.len());
            seen.push(target);
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            )
            .unwrap();
        }
        seen
    });
    (format!("http://{addr}"), handle)
}

#[test]
fn fetch_counts_live_over_http_with_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (base, server) = count_server(3);
    let cfg = dir.path().join("live.toml");
    std::fs::write(
        &cfg,
        format!(
            "kind = \"live\"\ncache = \"cache.tsv\"\nnormalizer = {{ fixed = 1000000 }}\n\
             [live]\nendpoint = \"{base}/search?q={{query}}\"\ncount_field = \"total\"\n"
        ),
    )
    .unwrap();
    let terms = dir.path().join("terms.txt");
    std::fs::write(&terms, "horse\nrider\n").unwrap();
    let out = dir.path().join("snap.tsv");
    let args = ["fetch-counts", "--terms", p(&terms), "--provider-config", p(&cfg), "--out", p(&out)];
    let o = compsim(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.contains(&"/search?q=%22horse%22+%22rider%22".to_string()), "{seen:?}");

    // Second run is served entirely from the cache; the server is gone.
    let first = std::fs::read_to_string(&out).unwrap();
    let o = compsim(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
    assert!(dir.path().join("cache.tsv").exists());
}

#[test]
fn unreachable_live_endpoint_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = dir.path().join("live.toml");
    std::fs::write(
        &cfg,
        format!(
            "kind = \"live\"\nnormalizer = {{ fixed = 1000 }}\n[live]\n\
             endpoint = \"http://127.0.0.1:{port}/?q={{query}}\"\ncount_field = \"n\"\ntimeout_secs = 2\n"
        ),
    )
    .unwrap();
    let o = compsim(&["nwd", "a", "b", "--provider", "live", "--provider-config", p(&cfg)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("retry later"));
}

fn write_matrix(dir: &Path, m: &DistanceMatrix) -> PathBuf {
    let path = dir.join("m.phylip");
    std::fs::write(&path, m.to_phylip().unwrap()).unwrap();
    path
}

#[test]
fn cluster_additive_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = (0..8).map(|i| format!("leaf{i}")).collect();
    let (truth, m) = fixtures::additive_matrix(&labels, 3);
    let path = write_matrix(dir.path(), &m);
    let trace = dir.path().join("trace.csv");
    let out = dir.path().join("tree.newick");
    let o = compsim(&[
        "cluster", "--matrix", p(&path), "--seed", "42", "--out", p(&out), "--trace", p(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let newick = std::fs::read_to_string(&out).unwrap();
    assert_eq!(newick.trim(), truth.to_newick());
    let t = UnrootedTernaryTree::from_newick(&newick).unwrap();
    assert_eq!(t.internal_count(), 6);
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("step,score\n0,"));
    assert!(trace.trim_end().ends_with(",1.000000"));

    let o2 = compsim(&["cluster", "--matrix", p(&path), "--seed", "42"]);
    assert_eq!(stdout(&o2), newick);
}

#[test]
fn cluster_exhaustive_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = (0..5).map(|i| format!("x{i}")).collect();
    let m = fixtures::random_matrix(&labels, 1);
    let path = write_matrix(dir.path(), &m);
    let o = compsim(&["cluster", "--matrix", p(&path), "--exhaustive"]);
    assert_eq!(code(&o), 0);
    let o2 = compsim(&["cluster", "--matrix", p(&path), "--seed", "1"]);
    assert_eq!(stdout(&o), stdout(&o2));

    let small = fixtures::random_matrix(&labels[..3], 1);
    let path = write_matrix(dir.path(), &small);
    let o = compsim(&["cluster", "--matrix", p(&path)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at least 4"));

    std::fs::write(&path, "4\na 0 1\n").unwrap();
    assert_eq!(code(&compsim(&["cluster", "--matrix", p(&path)])), 2);
}

#[test]
fn classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("snap.tsv");
    fixtures::prime_snapshot(0).write(&snap).unwrap();
    let train = dir.path().join("train.tsv");
    std::fs::write(&train, write_labeled(&recipe::training())).unwrap();
    let test = dir.path().join("test.tsv");
    std::fs::write(&test, write_labeled(&recipe::test())).unwrap();
    let anchors = dir.path().join("anchors.txt");
    std::fs::write(&anchors, recipe::ANCHORS.join("\n") + "\n").unwrap();
    let model = dir.path().join("model.json");

    let o = compsim(&[
        "classify", "train", "--train", p(&train), "--anchors", p(&anchors), "--snapshot", p(&snap),
        "--model", p(&model), "--seed", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "training_accuracy\t100.00%\n");
    let json = std::fs::read_to_string(&model).unwrap();
    assert!(json.contains("\"anchors\""));

    let words = dir.path().join("words.txt");
    std::fs::write(&words, "101\n36\n").unwrap();
    let o = compsim(&["classify", "predict", "--model", p(&model), "--words", p(&words), "--snapshot", p(&snap)]);
    assert_eq!(stdout(&o), "+\t101\n-\t36\n");

    let o = compsim(&["classify", "evaluate", "--model", p(&model), "--test", p(&test), "--snapshot", p(&snap)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("accuracy\t19/19 = 100.00%\n"), "{}", stdout(&o));

    std::fs::write(&words, "banana\n").unwrap();
    let o = compsim(&["classify", "predict", "--model", p(&model), "--words", p(&words), "--snapshot", p(&snap)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_pipeline_rejects_three_objects() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for i in 0..3u64 {
        std::fs::write(corpus.join(format!("f{i}")), fixtures::english(i, 500)).unwrap();
    }
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "output = \"out\"\n[ncd]\ncorpus = \"corpus\"\n").unwrap();
    let o = compsim(&["run", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("out").exists());

    std::fs::write(&cfg, "output = \"out\"\n").unwrap();
    assert_eq!(code(&compsim(&["run", p(&cfg)])), 1);
}
