//! End-to-end tests of the spdelab binary: exit codes, file outputs,
//! overrides, and the determinism contract as seen from the outside.

use std::path::Path;
use std::process::{Command, Output};

fn spdelab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spdelab"))
}

fn run_args(args: &[&str]) -> Output {
    spdelab().args(args).output().expect("spawn spdelab")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_BOUNDS: &str = r#"
[nonlinearity]
name = "radial-state:m=0.1"

[run]
seed = 4100
dt = 5e-3
n_outer = 8

[experiment]
kind = "bounds"
t = 0.25
mart_paths = 48
"#;

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn catalog_exits_zero_and_lists_entries() {
    let out = run_args(&["catalog"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    for needle in ["xlogx", "holder:alpha=<a>", "radial-state:m=<v>", "8 modes"] {
        assert!(text.contains(needle), "catalog output missing {needle}");
    }
}

#[test]
fn run_is_deterministic_and_seed_override_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL_BOUNDS);
    let cfg = cfg.to_str().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let out_c = tmp.path().join("c");

    let a = run_args(&["run", "--config", cfg, "--out", out_a.to_str().unwrap()]);
    assert!(a.status.success(), "run failed: {}", stderr_of(&a));
    let b = run_args(&["run", "--config", cfg, "--out", out_b.to_str().unwrap()]);
    assert!(b.status.success());
    let c = run_args(&[
        "run",
        "--config",
        cfg,
        "--seed",
        "77",
        "--out",
        out_c.to_str().unwrap(),
    ]);
    // the reseeded run may legitimately trip a 3 sigma check at this tiny
    // budget; all that matters here is that it ran and wrote its files
    assert!(
        matches!(c.status.code(), Some(0) | Some(1)),
        "stderr: {}",
        stderr_of(&c)
    );

    let csv_a = std::fs::read_to_string(out_a.join("results.csv")).unwrap();
    let csv_b = std::fs::read_to_string(out_b.join("results.csv")).unwrap();
    let csv_c = std::fs::read_to_string(out_c.join("results.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "same config must reproduce results.csv byte for byte");
    assert_ne!(csv_a, csv_c, "a reseeded run must not reproduce the estimates");

    // json carries the resolved config and parses cleanly
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("results.json")).unwrap())
            .unwrap();
    assert_eq!(json["experiment"], "bounds");
    assert_eq!(json["seed"], 4100);
    assert!(json["resolved_config"].as_str().unwrap().contains("kind = \"bounds\""));
    assert!(out_a.join("plotdata").join("bounds_max_ratio.csv").exists());
}

#[test]
fn run_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL_BOUNDS);
    let cfg = cfg.to_str().unwrap();
    let one = tmp.path().join("t1");
    let two = tmp.path().join("t2");
    let a = run_args(&["run", "--config", cfg, "--threads", "1", "--out", one.to_str().unwrap()]);
    assert!(a.status.success());
    let b = run_args(&["run", "--config", cfg, "--threads", "2", "--out", two.to_str().unwrap()]);
    assert!(b.status.success());
    assert_eq!(
        std::fs::read_to_string(one.join("results.csv")).unwrap(),
        std::fs::read_to_string(two.join("results.csv")).unwrap(),
        "worker count must not leak into results"
    );
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();

    // unknown key
    let cfg = write_cfg(tmp.path(), "[run]\nseed = 1\nbogus = 3\n[experiment]\nkind = \"bounds\"\n");
    let out = run_args(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));

    // knob not allowed for the kind
    let cfg2 = tmp.path().join("knob.cfg");
    std::fs::write(&cfg2, "[experiment]\nkind = \"decay\"\nlambda = 2.0\n").unwrap();
    let out = run_args(&["run", "--config", cfg2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // nonpositive lambda
    let cfg3 = tmp.path().join("lam.cfg");
    std::fs::write(&cfg3, "[experiment]\nkind = \"schauder\"\nlambda = -1.0\n").unwrap();
    let out = run_args(&["run", "--config", cfg3.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("lambda"));

    // missing file
    let out = run_args(&["run", "--config", "/nonexistent/exp.cfg"]);
    assert_eq!(out.status.code(), Some(2));

    // unknown suite
    let out = run_args(&["verify", "nosuch"]);
    assert_eq!(out.status.code(), Some(2));

    // malformed thread env
    let out = spdelab()
        .args(["catalog"])
        .env("SPDELAB_THREADS", "many")
        .output()
        .unwrap();
    // catalog ignores threads; use a run to exercise the parse
    assert!(out.status.success());
    let cfg4 = write_cfg(tmp.path(), SMALL_BOUNDS);
    let out = spdelab()
        .args(["run", "--config", cfg4.to_str().unwrap()])
        .env("SPDELAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("SPDELAB_THREADS"));
}

#[test]
fn bundled_schvar_config_is_a_golden_run() {
    // cheapest of the bundled configs; the full set is exercised by
    // `verify all` and the acceptance suite
    let tmp = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/schvar.cfg");
    let out = run_args(&["run", "--config", cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(tmp.path().join("results.json").exists());
}

#[test]
fn divergent_fixed_point_exits_one() {
    // a first-order term this strong cannot be absorbed at lambda = 2
    let out = run_args(&["schvar", "--lambda", "2.0", "--delta", "60.0", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("error:"));
}

#[test]
fn resolvent_subcommand_reads_probe_files() {
    let tmp = tempfile::tempdir().unwrap();
    let probes = tmp.path().join("probes.txt");
    std::fs::write(
        &probes,
        "# two probe points\n0.3, 0.15, 0.1, 0.075, 0.06, 0.05, 0.042857, 0.0375\n0 0 0 0 0 0 0 0\n",
    )
    .unwrap();
    let out = run_args(&[
        "resolvent",
        "--lambda",
        "2.5",
        "--alpha",
        "0.5",
        "--probe-file",
        probes.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("u0 =") && text.contains("u1 ="));
    assert!(text.contains("D_1 u0"));

    // wrong dimensionality is an argument error
    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "0.1 0.2 0.3\n").unwrap();
    let out = run_args(&["resolvent", "--lambda", "2.5", "--probe-file", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_subcommand_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ev");
    let out = run_args(&[
        "evolve",
        "--t",
        "0.3",
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("name,value,std_error,target,tolerance,status"));
    assert!(csv.contains("v_probe0"));

    let out = run_args(&["evolve", "--t", "-1.0"]);
    assert_eq!(out.status.code(), Some(2));
}
