use std::fs;
use std::process::{Command, Output};

fn pmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmm")).args(args).output().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = pmm(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("usage"));
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(pmm(&[]).status.code(), Some(2));
    assert_eq!(pmm(&["no-such-experiment"]).status.code(), Some(2));
    assert_eq!(pmm(&["converge", "--no-such-key", "1"]).status.code(), Some(2));
    assert_eq!(pmm(&["converge", "--m-list", "5,oops"]).status.code(), Some(2));
    assert_eq!(pmm(&["converge", "--seed"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = pmm(&["converge", "--output-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn manifest_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(pmm(&["converge", "--output-dir", d]).status.success());
    let manifest = dir.path().join("manifest.json");
    assert_eq!(pmm(&["forward-demo", "--from-manifest", manifest.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nm_list = 5,10\nn_eval = 64\n").unwrap();
    let out_dir = dir.path().join("out");
    let status = pmm(&[
        "converge",
        "--config",
        cfg.to_str().unwrap(),
        "--n-eval",
        "32",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let text = fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n_eval"], "32");
    assert_eq!(manifest["config"]["m_list"], "5,10");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let d = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_pmm"))
            .args(["allen-cahn", "--n-steps", "300", "--burn-in", "100", "--output-dir", d.to_str().unwrap()])
            .env("PMM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read(d.join("chain.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("4", "four"));
}
