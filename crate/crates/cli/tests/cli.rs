use std::path::Path;
use std::process::{Command, Output};

fn gncopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gncopt")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn summary(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_header_and_rows() {
    let o = gncopt(&["run", "--problem", "logdet", "--size", "4", "--iters", "20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,loss,grad_norm,min_eig,elapsed_ms"));
    assert_eq!(lines.count(), 21);
}

#[test]
fn run_is_byte_reproducible() {
    let args = ["run", "--problem", "gmm", "--size", "2", "--components", "2", "--samples", "200", "--iters", "30", "--seed", "4"];
    let a = gncopt(&args);
    let b = gncopt(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = gncopt(&["run", "--size", "3", "--iters", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(out.exists());
    let s = summary(&out.with_extension("json"));
    assert_eq!(s["iterations"], 10);
    assert_eq!(s["passed"], true);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "# a comment\nsize = 3\niters = 50\n").unwrap();
    let o = gncopt(&["run", "--config", cfg.to_str().unwrap(), "--iters", "5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 7);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&gncopt(&["run", "--problem", "nope"])), 2);
    assert_eq!(code(&gncopt(&["run", "--beta", "abc"])), 2);
    assert_eq!(code(&gncopt(&["run", "--size", "0"])), 2);
    assert_eq!(code(&gncopt(&["verify", "orthonormality", "--charts", "none"])), 2);
    assert_eq!(code(&gncopt(&["verify", "no-such-suite"])), 2);
    assert_eq!(code(&gncopt(&["train-mlp", "--layers", "3"])), 2);
    assert_eq!(code(&gncopt(&["frobnicate"])), 2);
}

#[test]
fn divergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = gncopt(&["run", "--size", "5", "--beta", "5", "--iters", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let s = summary(&out.with_extension("json"));
    assert_eq!(s["passed"], false);
    assert!(s["error"].is_string());
}

#[test]
fn verify_prints_json_report() {
    let o = gncopt(&["verify", "orthonormality", "--charts", "dense-sym-A,triangular-A", "--dims", "2", "--trials", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn train_outputs_share_one_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut keys = Vec::new();
    for opt in ["ifkfac", "kfac", "sgd"] {
        let out = dir.path().join(format!("{opt}.csv"));
        let o = gncopt(&["train-mlp", "--optimizer", opt, "--iters", "20", "--samples", "128", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{opt}: {}", String::from_utf8_lossy(&o.stderr));
        let header = std::fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "iter,loss,grad_norm,min_eig,elapsed_ms");
        assert!(out.with_extension("factors.csv").exists());
        let s = summary(&out.with_extension("json"));
        let mut k: Vec<String> = s["metrics"].as_object().unwrap().keys().cloned().collect();
        k.sort();
        keys.push(k);
    }
    assert_eq!(keys[0], keys[1]);
    // plain SGD has no factors to report
    assert!(keys[2].iter().all(|k| keys[0].contains(k)));
}

#[test]
fn zero_step_sgd_leaves_loss_unchanged() {
    let o = gncopt(&["train-mlp", "--optimizer", "sgd", "--beta2", "0", "--iters", "10", "--samples", "128"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let losses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
}

#[test]
fn sweep_runs_in_parallel_and_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("list.txt");
    std::fs::write(
        &list,
        "size=3 iters=15 out=a.csv\n\
         # skipped\n\
         problem=rosenbrock size=4 optimizer=adam iters=15 out=b.csv\n\
         cmd=train-mlp iters=5 samples=64 out=c.csv\n",
    )
    .unwrap();
    let o = gncopt(&["sweep", "--list", list.to_str().unwrap(), "--jobs", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["a.csv", "b.csv", "c.csv", "a.json", "c.factors.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let single = gncopt(&["run", "--size", "3", "--iters", "15"]);
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), single.stdout);
}

#[test]
fn sweep_with_bad_line_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("list.txt");
    std::fs::write(&list, "size=3 iters=5\n").unwrap();
    assert_eq!(code(&gncopt(&["sweep", "--list", list.to_str().unwrap()])), 2);
}
