//! End-to-end command-line checks: pipeline round trips, exit codes,
//! reproducibility under a fixed seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_covten")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("covten-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_fit_evaluate_complete_pipeline() {
    let dir = tmpdir("pipeline");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--dims",
            "12,10,8",
            "--couple",
            "0:9",
            "--rank",
            "1",
            "--keep-frac",
            "0.5",
            "--eta-t",
            "0",
            "--eta-m",
            "0",
            "--p",
            "1.0",
            "--seed",
            "5",
            "--out-prefix",
            "demo",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("demo.tensor").exists());
    assert!(dir.join("demo.mode0.matrix").exists());
    assert!(dir.join("demo.truth.model").exists());

    let out = run_in(
        &dir,
        &[
            "fit",
            "--tensor",
            "demo.tensor",
            "--covariate",
            "0:demo.mode0.matrix",
            "--rank",
            "1",
            "--restarts",
            "2",
            "--tol",
            "1e-10",
            "--seed",
            "5",
            "--out",
            "demo.model",
            "--trace-out",
            "demo.trace",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.join("demo.trace")).unwrap();
    assert!(trace.lines().count() >= 2);

    // noiseless fully observed rank-1: evaluate reports near-zero errors
    let out = run_in(
        &dir,
        &["evaluate", "--est", "demo.model", "--truth", "demo.truth.model"],
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let tensor_err: f64 = text
        .lines()
        .find(|l| l.starts_with("tensor,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(tensor_err < 1e-8, "tensor error {tensor_err}");

    // completing a training coordinate reproduces the training value
    fs::write(dir.join("pts.coords"), "coords 3 base=0\n2 3 4\n").unwrap();
    let out = run_in(
        &dir,
        &["complete", "--model", "demo.model", "--coords", "pts.coords"],
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let got: f64 = text
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(3))
        .unwrap()
        .parse()
        .unwrap();
    let tensor_text = fs::read_to_string(dir.join("demo.tensor")).unwrap();
    let want: f64 = tensor_text
        .lines()
        .find(|l| l.starts_with("2 3 4 "))
        .and_then(|l| l.split_whitespace().nth(3))
        .unwrap()
        .parse()
        .unwrap();
    assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let dir = tmpdir("usage");
    let out = run_in(&dir, &["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("usage"), "{err}");
    let out = run_in(&dir, &[]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(&dir, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tmpdir("dataerr");
    fs::write(dir.join("bad.tensor"), "tensor 2 2 2 base=0\n0 5 1.0\n").unwrap();
    let out = run_in(
        &dir,
        &[
            "fit", "--tensor", "bad.tensor", "--rank", "1", "--out", "m.model",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");

    let out = run_in(
        &dir,
        &[
            "fit", "--tensor", "missing.tensor", "--rank", "1", "--out", "m.model",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    // all-zero observations degenerate every restart
    let dir = tmpdir("numfail");
    let mut tensor = String::from("tensor 3 3 3 3 base=0\n");
    for i in 0..3 {
        tensor.push_str(&format!("{i} 0 0 0.0\n"));
    }
    fs::write(dir.join("zero.tensor"), tensor).unwrap();
    let out = run_in(
        &dir,
        &[
            "fit",
            "--tensor",
            "zero.tensor",
            "--rank",
            "1",
            "--restarts",
            "2",
            "--out",
            "m.model",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let dir = tmpdir("repro");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--dims",
            "8,8,8",
            "--couple",
            "0:6",
            "--rank",
            "2",
            "--eta-t",
            "0.01",
            "--eta-m",
            "0.01",
            "--p",
            "0.6",
            "--seed",
            "11",
            "--out-prefix",
            "r",
        ],
    );
    assert!(out.status.success());
    for name in ["a.model", "b.model"] {
        let out = run_in(
            &dir,
            &[
                "fit",
                "--tensor",
                "r.tensor",
                "--covariate",
                "0:r.mode0.matrix",
                "--rank",
                "2",
                "--restarts",
                "3",
                "--max-iters",
                "30",
                "--seed",
                "11",
                "--out",
                name,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read_to_string(dir.join("a.model")).unwrap();
    let b = fs::read_to_string(dir.join("b.model")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmpdir("config");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--dims",
            "8,8,8",
            "--couple",
            "0:6",
            "--rank",
            "1",
            "--eta-t",
            "0",
            "--eta-m",
            "0",
            "--p",
            "1.0",
            "--seed",
            "3",
            "--out-prefix",
            "c",
        ],
    );
    assert!(out.status.success());
    fs::write(dir.join("solver.conf"), "# solver settings\nseed = 9\nrestarts = 2\n").unwrap();
    // config-driven run equals the flag-driven run with the same values
    let out = run_in(
        &dir,
        &[
            "fit",
            "--tensor",
            "c.tensor",
            "--covariate",
            "0:c.mode0.matrix",
            "--rank",
            "1",
            "--config",
            "solver.conf",
            "--out",
            "viaconf.model",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run_in(
        &dir,
        &[
            "fit",
            "--tensor",
            "c.tensor",
            "--covariate",
            "0:c.mode0.matrix",
            "--rank",
            "1",
            "--seed",
            "9",
            "--restarts",
            "2",
            "--out",
            "viaflags.model",
        ],
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(dir.join("viaconf.model")).unwrap(),
        fs::read_to_string(dir.join("viaflags.model")).unwrap()
    );
    // a flag overrides the file: different seed changes provenance
    let out = run_in(
        &dir,
        &[
            "fit",
            "--tensor",
            "c.tensor",
            "--covariate",
            "0:c.mode0.matrix",
            "--rank",
            "1",
            "--config",
            "solver.conf",
            "--seed",
            "10",
            "--out",
            "override.model",
        ],
    );
    assert!(out.status.success());
    let text = fs::read_to_string(dir.join("override.model")).unwrap();
    assert!(text.contains("seed 10 "), "{text}");
}

#[test]
fn tune_and_experiment_run_end_to_end() {
    let dir = tmpdir("tunexp");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--dims",
            "10,10,10",
            "--couple",
            "0:8",
            "--rank",
            "2",
            "--keep-frac",
            "0.5",
            "--eta-t",
            "0.001",
            "--eta-m",
            "0.001",
            "--p",
            "0.8",
            "--seed",
            "21",
            "--out-prefix",
            "t",
        ],
    );
    assert!(out.status.success());
    let out = run_in(
        &dir,
        &[
            "tune",
            "--tensor",
            "t.tensor",
            "--covariate",
            "0:t.mode0.matrix",
            "--ranks",
            "1,2",
            "--fracs",
            "0.5,1.0",
            "--restarts",
            "2",
            "--max-iters",
            "40",
            "--seed",
            "21",
            "--out",
            "tuned.model",
            "--bic-out",
            "bic.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("rank 2"), "{text}");
    let bic = fs::read_to_string(dir.join("bic.csv")).unwrap();
    assert!(bic.starts_with("stage,parameter,bic"));
    assert_eq!(bic.lines().count(), 1 + 2 + 2);

    let out = run_in(
        &dir,
        &[
            "experiment",
            "--dims",
            "8,8,8",
            "--couple",
            "0:6",
            "--rank",
            "1",
            "--keep-frac",
            "0.5",
            "--eta-t",
            "0.001",
            "--eta-m",
            "0.001",
            "--p",
            "0.9",
            "--replicas",
            "2",
            "--restarts",
            "2",
            "--max-iters",
            "40",
            "--seed",
            "4",
            "--out",
            "rows.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("rows.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dims,coupled,rank,keep_frac,eta_t,eta_m,p,replicas,seed,method,metric,mean,stderr"
    );
    // 2 methods x (tensor + 3 comps + weight)
    assert_eq!(lines.count(), 10);
}
