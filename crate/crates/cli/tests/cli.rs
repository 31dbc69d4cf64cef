use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scoredim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scoredim"))
        .current_dir(dir)
        .env_remove("SCOREDIM_OUT")
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_blob_sidecar_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["generate", "--manifold", "sphere", "--k", "4", "--d", "12", "--n", "50", "--csv", "--out", "g"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["dataset.bin", "dataset.json", "dataset.csv", "generate.resolved.toml"] {
        assert!(dir.path().join("g").join(f).exists(), "{f}");
    }
    let resolved = fs::read_to_string(dir.path().join("g/generate.resolved.toml")).unwrap();
    assert!(resolved.contains("radius = 1.0"), "{resolved}");
}

#[test]
fn default_output_goes_under_the_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_scoredim"))
        .current_dir(dir.path())
        .env("SCOREDIM_OUT", "runs")
        .args(["-q", "generate", "--manifold", "spaghetti", "--d", "10", "--n", "20", "--t-lo", "0", "--t-hi", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("runs/generate/dataset.bin").exists());
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.toml"), "seed = 3\n[dataset]\nmanifold = \"sphere\"\nk = 2\nd = 6\nn = 40\n").unwrap();
    let o = scoredim(dir.path(), &["generate", "--config", "g.toml", "--n", "25", "--out", "g"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta = report(&dir.path().join("g/dataset.json"));
    assert_eq!(meta["seed"], 3);
    assert!(stdout(&o).contains("25 x 6"), "{}", stdout(&o));
}

#[test]
fn invalid_sphere_dimension_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["generate", "--manifold", "sphere", "--k", "10", "--d", "10", "--n", "5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("k=10"), "{}", stderr(&o));
}

#[test]
fn unknown_dataset_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["generate", "--manifold", "sphere", "--k", "2", "--d", "5", "--n", "5", "--alpha", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&scoredim(dir.path(), &["estimate", "--frobnicate"])), 2);
}

#[test]
fn exact_field_recovers_the_sphere_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let g = scoredim(dir.path(), &["generate", "--manifold", "sphere", "--k", "10", "--d", "100", "--n", "500", "--out", "g"]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let o = scoredim(
        dir.path(),
        &["estimate", "--field", "exact", "--dataset", "g/dataset.bin", "--base-points", "4", "--baselines", "mle:5,ppca", "--out", "e"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("estimate: 10"), "{}", stdout(&o));
    let r = report(&dir.path().join("e/report.json"));
    assert_eq!(r["aggregate"], 10);
    assert!(r["baselines"]["mle_m5"].as_f64().unwrap() > 5.0);
    assert!(r["baselines"]["ppca"].is_number());
    assert!(dir.path().join("e/spectra.csv").exists());
    assert!(dir.path().join("e/spectra.svg").exists());
    assert!(dir.path().join("e/estimate.resolved.toml").exists());
}

#[test]
fn subspace_field_without_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["estimate", "--field", "subspace", "--k", "5", "--d", "30", "--base-points", "3", "--out", "e"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&dir.path().join("e/report.json"))["aggregate"], 5);
}

#[test]
fn corrupted_field_needs_inner_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["estimate", "--field", "corrupted", "--k", "3", "--d", "10"]);
    assert_eq!(code(&o), 2);
    let o = scoredim(
        dir.path(),
        &["estimate", "--field", "corrupted", "--inner", "subspace", "--ratio", "0.1", "--k", "3", "--d", "20", "--base-points", "3", "--out", "e"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&dir.path().join("e/report.json"))["aggregate"], 3);
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["train", "--dataset", "missing.bin"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.bin"));
    let o = scoredim(dir.path(), &["estimate", "--field", "empirical"]);
    assert_eq!(code(&o), 2);
    let o = scoredim(dir.path(), &["estimate", "--field", "trained", "--k", "2", "--d", "4"]);
    assert_eq!(code(&o), 2);
}

fn small_dataset(dir: &Path) {
    let g = scoredim(dir, &["generate", "--manifold", "sphere", "--k", "2", "--d", "6", "--n", "200", "--out", "g"]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let common = ["train", "--dataset", "g/dataset.bin", "--hidden", "16,16", "--steps", "120", "--batch-size", "32"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = common.iter().chain(extra).copied().collect();
        let o = scoredim(dir.path(), &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    run(&["--out", "full"]);
    run(&["--stop-at", "60", "--out", "split"]);
    let half = report(&dir.path().join("split/checkpoint.json"));
    assert_eq!(half["step"], 60);
    run(&["--resume", "--out", "split"]);
    let full = report(&dir.path().join("full/checkpoint.json"));
    let split = report(&dir.path().join("split/checkpoint.json"));
    assert_eq!(full["step"], 120);
    assert_eq!(full["seed"], split["seed"]);
    assert_eq!(full["blob_sha256"], split["blob_sha256"]);
    assert_eq!(
        fs::read_to_string(dir.path().join("full/loss.csv")).unwrap(),
        fs::read_to_string(dir.path().join("split/loss.csv")).unwrap()
    );
}

#[test]
fn resume_rejects_a_different_seed() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let base = ["train", "--dataset", "g/dataset.bin", "--hidden", "8", "--steps", "10", "--out", "t"];
    assert_eq!(code(&scoredim(dir.path(), &base)), 0);
    let args: Vec<&str> = base.iter().copied().chain(["--resume", "--seed", "9"]).collect();
    assert_eq!(code(&scoredim(dir.path(), &args)), 2);
}

#[test]
fn divergence_exits_1_and_keeps_the_loss_trace() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let o = scoredim(dir.path(), &["train", "--dataset", "g/dataset.bin", "--hidden", "16", "--steps", "50", "--lr", "1e6", "--out", "t"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
    assert!(stderr(&o).contains("loss.csv"));
    let trace = fs::read_to_string(dir.path().join("t/loss.csv")).unwrap();
    assert!(trace.starts_with("step,loss\n") && trace.lines().count() >= 2);
}

#[test]
fn trained_checkpoint_feeds_estimate() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let t = scoredim(dir.path(), &["train", "--dataset", "g/dataset.bin", "--hidden", "16,16", "--steps", "50", "--out", "t"]);
    assert_eq!(code(&t), 0, "{}", stderr(&t));
    let o = scoredim(
        dir.path(),
        &["estimate", "--field", "trained", "--checkpoint", "t/checkpoint.json", "--dataset", "g/dataset.bin", "--base-points", "3", "--out", "e"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let k = report(&dir.path().join("e/report.json"))["aggregate"].as_u64().unwrap();
    assert!((1..=6).contains(&k));
}

#[test]
fn malformed_plan_reports_the_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "[[table]]\nname = \"a\"\n[table.dataset]\nmanifold = \"sphere\"\nk = 2\nd = 5\nn = 100\nbogus = 1\n",
    )
    .unwrap();
    let o = scoredim(dir.path(), &["benchmark", "--config", "bad.toml", "--out", "b"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("bogus") && err.contains("line"), "{err}");
}

#[test]
fn smoke_benchmark_baselines_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["benchmark", "--profile", "smoke", "--only", "baselines", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("mle_m5"));
    let csv = fs::read_to_string(dir.path().join("b/table/table.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("dataset,truth,ours"));
    assert!(dir.path().join("b/benchmark.resolved.toml").exists());
}

#[test]
fn plan_file_runs_a_single_exact_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("plan.toml"),
        r#"
[[table]]
name = "tiny"
[table.dataset]
manifold = "sphere"
k = 3
d = 12
n = 200
[table.field]
kind = "exact"
[table.estimator]
base_points = 3
[[table.baselines]]
method = "ppca"
"#,
    )
    .unwrap();
    let o = scoredim(dir.path(), &["benchmark", "--config", "plan.toml", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("b/table/tiny/report.json"));
    assert_eq!(r["report"]["aggregate"], 3);
}

#[test]
fn resolved_suite_round_trips_as_a_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = scoredim(dir.path(), &["benchmark", "--profile", "smoke", "--only", "baselines", "--only", "table", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = scoredim(dir.path(), &["benchmark", "--config", "a/benchmark.resolved.toml", "--only", "baselines", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.path().join("a/table/table.csv")).unwrap(),
        fs::read_to_string(dir.path().join("b/table/table.csv")).unwrap()
    );
}
