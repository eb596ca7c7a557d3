use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mallm-gan"));
    c.env_remove("MALLMGAN_API_KEY");
    c
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small linear congruential stream, enough for fixture noise.
struct Lcg(u64);

impl Lcg {
    fn unit(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn write_chain(path: &Path, n: usize) {
    let mut rng = Lcg(7);
    let mut text = String::from("A,B,C\n");
    for _ in 0..n {
        let a = rng.unit() < 0.5;
        let b = rng.unit() < if a { 0.9 } else { 0.1 };
        let c = rng.unit() < if b { 0.85 } else { 0.15 };
        text.push_str(&format!("a{},b{},c{}\n", a as u8, b as u8, c as u8));
    }
    std::fs::write(path, text).unwrap();
}

/// Asia training rows drawn with the CLI itself.
fn asia_rows(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("asia.csv");
    let o = run(&["mock-sample", "--world", p(&repo("data/asia_world.json")), "--n", &n.to_string(), "--seed", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{o:?}");
    out
}

fn mock_train(dir: &Path, data: &Path, out: &str, extra: &[&str]) -> Output {
    let out = dir.join(out);
    let mut args = vec![
        "train",
        "--data",
        p(data),
        "--backend",
        "mock",
        "--out",
        p(&out),
    ];
    let world = repo("data/asia_world.json");
    args.extend(["--world", p(&world)]);
    args.extend(extra);
    run(&args)
}

#[test]
fn init_structure_recovers_a_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("chain.csv");
    write_chain(&data, 2000);
    let reference = dir.path().join("truth.txt");
    std::fs::write(&reference, "[('A', 'B'), ('B', 'C')]\n").unwrap();
    let out = dir.path().join("dag.txt");
    let o = run(&["init-structure", "--data", p(&data), "--out", p(&out), "--reference-dag", p(&reference)]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(std::fs::read_to_string(&out).unwrap().trim(), "[('A', 'B'), ('B', 'C')]");
    assert!(stdout(&o).contains("ged to reference: 0"), "{}", stdout(&o));
}

#[test]
fn init_structure_on_one_column_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    std::fs::write(&data, "x\n1\n2\n3\n1\n").unwrap();
    let out = dir.path().join("dag.txt");
    let o = run(&["init-structure", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(std::fs::read_to_string(&out).unwrap().trim(), "[]");
}

#[test]
fn bad_schema_path_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("chain.csv");
    write_chain(&data, 20);
    let o = run(&["init-structure", "--data", p(&data), "--schema", "/nonexistent/schema.json", "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&run(&["train", "--bogus"])), 2);
}

#[test]
fn mock_train_writes_a_replayable_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 1000);
    let start = Instant::now();
    let o = mock_train(
        dir.path(),
        &data,
        "run",
        &["--epochs", "1", "--batch-size", "500", "--init", "empty", "--reference-dag", p(&repo("data/asia_truth.txt"))],
    );
    let elapsed = start.elapsed();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");

    let run_dir = dir.path().join("run");
    for f in ["config.toml", "run_log.jsonl", "theta.json", "theta.txt", "synthetic.csv"] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(run_dir.join("run_log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["kind"], "header");
    assert_eq!(lines[0]["cli"]["backend"], "mock");
    assert_eq!(lines[0]["config"]["batch_size"], 500);
    assert_eq!(lines.iter().filter(|l| l["kind"] == "iteration").count(), 2);
    assert_eq!(lines.last().unwrap()["kind"], "final");
    assert!(!log.contains("api_key"));

    let synthetic = std::fs::read_to_string(run_dir.join("synthetic.csv")).unwrap();
    assert_eq!(synthetic.lines().count(), 1001);

    // The saved config reproduces the run without any flags.
    let again = run(&["train", "--config", p(&run_dir.join("config.toml")), "--out", p(&dir.path().join("replay"))]);
    assert_eq!(code(&again), 0, "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(
        synthetic,
        std::fs::read_to_string(dir.path().join("replay/synthetic.csv")).unwrap()
    );
}

#[test]
fn repeated_seed_gives_identical_synthetic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 200);
    let flags = ["--epochs", "1", "--batch-size", "100", "--seed", "9"];
    let a = mock_train(dir.path(), &data, "a", &flags);
    let b = mock_train(dir.path(), &data, "b", &flags);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    let read = |d: &str| std::fs::read_to_string(dir.path().join(d).join("synthetic.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn zero_epochs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 100);
    let o = mock_train(dir.path(), &data, "run", &["--epochs", "0"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_epochs"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 200);
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "backend = \"mock\"\n[run]\nmax_epochs = 0\nbatch_size = 100\n").unwrap();
    let out = dir.path().join("run");
    let world = repo("data/asia_world.json");
    let o = run(&["train", "--config", p(&cfg), "--data", p(&data), "--world", p(&world), "--out", p(&out), "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let saved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("max_epochs = 1"), "{saved}");
    assert!(saved.contains("batch_size = 100"), "{saved}");
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "api_key = \"sk-nope\"\n").unwrap();
    let o = run(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn live_backend_without_key_is_a_provider_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 100);
    let out = dir.path().join("run");
    let o = run(&["train", "--data", p(&data), "--backend", "live", "--out", p(&out), "--epochs", "1"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("MALLMGAN_API_KEY"));
}

fn trained_theta(dir: &Path, data: &Path) -> PathBuf {
    let o = mock_train(dir, data, "run", &["--epochs", "1", "--batch-size", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("run/theta.json")
}

#[test]
fn generate_writes_n_rows_and_honours_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 200);
    let theta = trained_theta(dir.path(), &data);
    let world = repo("data/asia_world.json");
    let out = dir.path().join("ten.csv");
    let o = run(&["generate", "--theta", p(&theta), "--data", p(&data), "--backend", "mock", "--world", p(&world), "--n", "10", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 11);

    let out = dir.path().join("smokers.csv");
    let o = run(&[
        "generate", "--theta", p(&theta), "--data", p(&data), "--backend", "mock", "--world", p(&world), "--n", "25",
        "--condition", "smoke = yes", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "smoke").unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.split(',').nth(col) == Some("yes")));
}

#[test]
fn malformed_theta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = asia_rows(dir.path(), 50);
    let theta = dir.path().join("theta.json");
    std::fs::write(&theta, "{\"context\": 3}").unwrap();
    let world = repo("data/asia_world.json");
    let o = run(&["generate", "--theta", p(&theta), "--data", p(&data), "--backend", "mock", "--world", p(&world), "--n", "5", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(code(&o), 2);
}

fn write_blobs(path: &Path, n: usize, seed: u64) {
    let mut rng = Lcg(seed);
    let mut text = String::from("x1,x2,label\n");
    for i in 0..n {
        // Box-Muller for unit normals.
        let mut normal = || {
            let (u, v) = (rng.unit().max(1e-12), rng.unit());
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        };
        let (cx, label) = if i % 2 == 0 { (0.0, "a") } else { (4.0, "b") };
        text.push_str(&format!("{:.4},{:.4},{label}\n", cx + normal(), normal()));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn evaluate_mle_on_separable_data() {
    let dir = tempfile::tempdir().unwrap();
    let (train, syn, test) = (dir.path().join("train.csv"), dir.path().join("syn.csv"), dir.path().join("test.csv"));
    write_blobs(&train, 200, 1);
    write_blobs(&syn, 200, 2);
    write_blobs(&test, 200, 3);
    let out = dir.path().join("report");
    let o = run(&["evaluate", "--synthetic", p(&syn), "--train", p(&train), "--test", p(&test), "--metric", "mle", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("mle.json")).unwrap()).unwrap();
    assert!(report["mean_of_best"].as_f64().unwrap() >= 0.95, "{report}");
    assert!(out.join("mle.csv").exists());
}

#[test]
fn evaluate_dcr_on_copies_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (train, holdout) = (dir.path().join("train.csv"), dir.path().join("holdout.csv"));
    write_blobs(&train, 100, 4);
    write_blobs(&holdout, 100, 5);
    let out = dir.path().join("report");
    let o = run(&["evaluate", "--synthetic", p(&train), "--train", p(&train), "--test", p(&holdout), "--metric", "dcr", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("dcr to train (q25, q50, q75): 0, 0, 0"), "{}", stdout(&o));
    assert_eq!(std::fs::read_to_string(out.join("dcr.csv")).unwrap().lines().count(), 101);
}

#[test]
fn evaluate_without_target_column_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (train, syn) = (dir.path().join("train.csv"), dir.path().join("syn.csv"));
    write_blobs(&train, 50, 6);
    std::fs::write(&syn, "x1,x2\n0.1,0.2\n").unwrap();
    let o = run(&["evaluate", "--synthetic", p(&syn), "--train", p(&train), "--test", p(&train), "--metric", "mle", "--out", p(&dir.path().join("r"))]);
    assert_eq!(code(&o), 2);
}
