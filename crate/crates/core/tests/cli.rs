//! End-to-end checks of the `coalnet` binary: exit codes, diagnostics,
//! config/override plumbing, and byte-level output determinism.

use std::fs;
use std::process::{Command, Output};

fn coalnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

const FAST: &[&str] = &["--set", "run.trials=5", "--set", "geometry.dist_step=25"];

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = coalnet(
            &[
                &["alpha_minmax", "--seed", "42", "--out", path.to_str().unwrap()],
                FAST,
            ]
            .concat(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn stdout_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let filed = coalnet(
        &[
            &["alpha_minmax", "--seed", "3", "--out", path.to_str().unwrap()],
            FAST,
        ]
        .concat(),
    );
    assert!(filed.status.success());
    let piped = coalnet(&[&["alpha_minmax", "--seed", "3"], FAST].concat());
    assert!(piped.status.success());
    assert_eq!(piped.stdout, fs::read(&path).unwrap());
}

#[test]
fn config_file_and_overrides_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(
        &cfg,
        "# sweep a single relay\n[run]\ntrials = 5\nseed = 1\n[geometry]\ndist_stop = 30\ndist_step = 25\n",
    )
    .unwrap();
    let base = coalnet(&["alpha_minmax", "--config", cfg.to_str().unwrap()]);
    assert!(base.status.success());
    let rows = String::from_utf8(base.stdout).unwrap();
    // header + distances 5 and 30
    assert_eq!(rows.lines().count(), 3);

    let tweaked = coalnet(&[
        "alpha_minmax",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "geometry.dest_m=60",
    ]);
    assert!(tweaked.status.success());
    assert_ne!(String::from_utf8(tweaked.stdout).unwrap(), rows);
}

#[test]
fn seed_flag_overrides_config() {
    let with_flag = coalnet(&[&["alpha_minmax", "--seed", "9"], FAST].concat());
    let with_set = coalnet(&[&["alpha_minmax", "--set", "run.seed=9"], FAST].concat());
    let other = coalnet(&[&["alpha_minmax", "--seed", "10"], FAST].concat());
    assert_eq!(with_flag.stdout, with_set.stdout);
    assert_ne!(with_flag.stdout, other.stdout);
}

#[test]
fn unknown_experiment_fails_with_one_line_diagnostic() {
    let out = coalnet(&["frobnicate"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr was: {stderr}");
    assert!(stderr.starts_with("error: "));
    assert!(stderr.contains("alpha_minmax"), "should list valid names");
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[radio\nkappa = 3\n").unwrap();
    let out = coalnet(&["alpha_minmax", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);

    let missing = coalnet(&["alpha_minmax", "--config", "/nonexistent.ini"]);
    assert!(!missing.status.success());

    let bad_value = coalnet(&["alpha_minmax", "--set", "radio.kappa=-1"]);
    assert!(!bad_value.status.success());
}

#[test]
fn csv_shape_is_well_formed() {
    let out = coalnet(&[&["alpha_market"], FAST, &["--set", "geometry.sweep_step=50"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let cols = lines.next().unwrap().split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), cols, "ragged row: {line}");
    }
}
