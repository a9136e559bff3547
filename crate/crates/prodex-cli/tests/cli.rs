//! End-to-end tests of the `prodex` binary: exit codes, error surfaces,
//! golden outputs, and byte-level determinism.

use std::path::Path;
use std::process::Command;

/// Captured run of the binary.
struct Run {
    status: i32,
    stdout: String,
    stderr: String,
}

/// Runs `prodex` with the given arguments and extra environment.
fn prodex_env(args: &[&str], envs: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prodex"));
    cmd.args(args);
    // Keep the ambient environment from skewing byte-determinism tests.
    if !envs.iter().any(|(k, _)| *k == "PRODEX_ENUM_BOUND") {
        cmd.env_remove("PRODEX_ENUM_BOUND");
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("prodex binary runs");
    Run {
        status: out.status.code().expect("no signal"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

fn prodex(args: &[&str]) -> Run {
    prodex_env(args, &[])
}

/// Absolute path of a bundled config.
fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// The case2 realization at seed 42, verified by hand: the slates are
/// `x1..x4` and its rotation, the draw assigns only `x3` to control, the
/// single conflict is at position 3 (`x3` vs `x4`), and the fair naive
/// coin lands control-first. Every item keeps its governing slate's
/// position among the survivors and positions pack `1..=4`.
const MERGE_GOLDEN: &str = "\
position,item,arm,r0_position,r1_position,sutva_value,conflicted
1,x2,treatment,2,1,1,false
2,x3,control,3,2,3,true
3,x4,treatment,4,3,3,true
4,x1,treatment,1,4,4,false
";

#[test]
fn merge_emits_the_golden_slate() {
    let run = prodex(&["merge", "--config", &config("case2.toml"), "--seed", "42"]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    assert_eq!(run.stdout, MERGE_GOLDEN);
}

#[test]
fn merge_out_writes_the_same_bytes_and_reports_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("slate.csv");
    let run = prodex(&[
        "merge",
        "--config",
        &config("case2.toml"),
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    assert_eq!(run.stdout, "");
    assert!(run.stderr.contains("wrote merged slate"));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), MERGE_GOLDEN);
}

#[test]
fn merge_seed_precedence_is_flag_over_config() {
    // The config pins seed 42; omitting --seed must match passing it.
    let with_flag = prodex(&["merge", "--config", &config("case2.toml"), "--seed", "42"]);
    let from_config = prodex(&["merge", "--config", &config("case2.toml")]);
    assert_eq!(from_config.stdout, with_flag.stdout);
    // A different seed must be able to produce a different realization.
    let reseeded: Vec<Run> = (0..20)
        .map(|s| prodex(&["merge", "--config", &config("case2.toml"), "--seed", &s.to_string()]))
        .collect();
    assert!(reseeded.iter().any(|r| r.stdout != with_flag.stdout));
}

#[test]
fn check_passes_consistent_and_fails_naive() {
    let pass = prodex(&["check", "--config", &config("case3.toml")]);
    assert_eq!(pass.status, 0, "stderr: {}", pass.stderr);
    assert!(pass
        .stdout
        .contains("verdict consistency=pass monotonicity=pass overall=pass"));

    let fail = prodex(&["check", "--config", &config("case1.toml")]);
    assert_eq!(fail.status, 1);
    assert!(fail.stdout.contains("overall=fail"));
    assert!(fail.stdout.contains("consistency: max deviation"));
}

#[test]
fn strategy_flag_overrides_the_config() {
    // case1 is naive (fails); overriding to consistent must pass.
    let run = prodex(&[
        "check",
        "--config",
        &config("case1.toml"),
        "--strategy",
        "consistent",
    ]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.contains("overall=pass"));

    let bad = prodex(&[
        "merge",
        "--config",
        &config("case1.toml"),
        "--strategy",
        "bogus",
    ]);
    assert_eq!(bad.status, 2);
    assert!(bad.stderr.contains("unknown merge strategy"));
}

#[test]
fn aa_scenario_certifies_clean() {
    let run = prodex(&["check", "--config", &config("aa.toml")]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.contains("overall=pass"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let run = prodex(&["check", "--config", "/nonexistent/nope.toml"]);
    assert_eq!(run.status, 2);
    assert!(run.stderr.contains("cannot read config"));
}

#[test]
fn config_field_errors_reach_stderr_with_the_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "r0 = [\"a\", \"b\"]\nr1 = [\"b\", \"a\"]\nh = [1.0, 0.0]\np0 = 1.5\n\
         strategy = \"consistent\"\n\n[u]\na = 1.0\nb = 1.0\n",
    )
    .unwrap();
    let run = prodex(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(run.status, 2);
    assert!(run.stderr.contains("config field `p0`"), "{}", run.stderr);
}

#[test]
fn kernels_writes_table_and_attention_sibling() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kernels.csv");
    let run = prodex(&[
        "kernels",
        "--config",
        &config("case3.toml"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    let table = std::fs::read_to_string(&out).unwrap();
    let attention = std::fs::read_to_string(dir.path().join("kernels_attention.csv")).unwrap();
    assert!(table.starts_with("arm,source_position,realized_position,probability\n"));
    // 2 arms x 4 sources x 4 positions + header.
    assert_eq!(table.lines().count(), 33);
    assert!(attention.starts_with("position,h,h_control,h_treatment\n"));
    assert_eq!(attention.lines().count(), 5);
}

#[test]
fn kernels_stdout_carries_both_tables() {
    let run = prodex(&["kernels", "--config", &config("case3.toml")]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.contains("arm,source_position,realized_position,probability\n"));
    assert!(run.stdout.contains("position,h,h_control,h_treatment\n"));
}

#[test]
fn plots_emit_the_expected_series() {
    let sweep = prodex(&[
        "kernels",
        "--config",
        &config("blockswap.toml"),
        "--plot",
        "split-sweep",
    ]);
    assert_eq!(sweep.status, 0, "stderr: {}", sweep.stderr);
    assert!(sweep.stdout.starts_with("series,x,y\n"));
    for p0 in ["p0=0.5,", "p0=0.7,", "p0=0.9,", "p0=0.99,"] {
        assert!(sweep.stdout.contains(p0), "missing series {p0}");
    }

    let profile = prodex(&[
        "kernels",
        "--config",
        &config("blockswap.toml"),
        "--plot",
        "kernel-profile",
    ]);
    assert_eq!(profile.status, 0);
    assert!(profile.stdout.contains("source=1,"));
    assert!(profile.stdout.contains("source=10,"));

    let steps = prodex(&[
        "kernels",
        "--config",
        &config("blockswap.toml"),
        "--plot",
        "step-attention",
    ]);
    assert_eq!(steps.status, 0);
    assert!(steps.stdout.contains("step=1,"));
    assert!(steps.stdout.contains("step=10,"));
}

#[test]
fn enumeration_bound_env_is_honored_and_validated() {
    let too_small = prodex_env(
        &["kernels", "--config", &config("case3.toml")],
        &[("PRODEX_ENUM_BOUND", "3")],
    );
    assert_eq!(too_small.status, 2);
    assert!(
        too_small.stderr.contains("exceeds the exact-enumeration bound"),
        "{}",
        too_small.stderr
    );

    let garbage = prodex_env(
        &["kernels", "--config", &config("case3.toml")],
        &[("PRODEX_ENUM_BOUND", "many")],
    );
    assert_eq!(garbage.status, 2);
    assert!(garbage.stderr.contains("PRODEX_ENUM_BOUND"), "{}", garbage.stderr);

    let raised = prodex_env(
        &["kernels", "--config", &config("case3.toml")],
        &[("PRODEX_ENUM_BOUND", "4")],
    );
    assert_eq!(raised.status, 0, "stderr: {}", raised.stderr);
}

#[test]
fn holdout_requires_monte_carlo_kernels() {
    let exact = prodex(&["kernels", "--config", &config("holdout.toml")]);
    assert_eq!(exact.status, 2);
    assert!(exact.stderr.contains("Monte Carlo"), "{}", exact.stderr);

    let mc = prodex(&[
        "kernels",
        "--config",
        &config("holdout.toml"),
        "--mode",
        "mc",
        "--samples",
        "5000",
    ]);
    assert_eq!(mc.status, 0, "stderr: {}", mc.stderr);
    assert!(mc.stdout.starts_with("arm,source_position,realized_position,probability\n"));
}

#[test]
fn simulate_is_byte_deterministic_and_seed_sensitive() {
    let args = [
        "simulate",
        "--config",
        &config("case4.toml"),
        "--replications",
        "2000",
    ];
    let a = prodex(&args);
    let b = prodex(&args);
    assert_eq!(a.status, 0, "stderr: {}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);

    let other = prodex(&[
        "simulate",
        "--config",
        &config("case4.toml"),
        "--replications",
        "2000",
        "--seed",
        "43",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn simulate_runs_are_thread_count_invariant() {
    let args = [
        "simulate",
        "--config",
        &config("case2.toml"),
        "--replications",
        "9000",
    ];
    let many = prodex(&args);
    let one = prodex_env(&args, &[("RAYON_NUM_THREADS", "1")]);
    assert_eq!(many.status, 0, "stderr: {}", many.stderr);
    assert_eq!(many.stdout, one.stdout);
}

#[test]
fn simulate_json_reports_analytic_expectations() {
    let run = prodex(&[
        "simulate",
        "--config",
        &config("case3.toml"),
        "--replications",
        "500",
        "--format",
        "json",
    ]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    let json: serde_json::Value = serde_json::from_str(&run.stdout).expect("valid json");
    assert_eq!(json["replications"], 500);
    assert_eq!(json["seed"], 42);
    let control = json["analytic"]["control"].as_f64().unwrap();
    let treatment = json["analytic"]["treatment"].as_f64().unwrap();
    assert!((control - 1.9).abs() < 1e-9);
    assert!((treatment - 1.991).abs() < 1e-9);
}

#[test]
fn simulate_summary_lands_on_stdout_when_artifact_goes_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("readouts.csv");
    let run = prodex(&[
        "simulate",
        "--config",
        &config("case4.toml"),
        "--replications",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.contains("arm"));
    assert!(run.stdout.contains("analytic"));
    assert!(out.exists());
    let artifact = std::fs::read_to_string(&out).unwrap();
    assert!(artifact.starts_with("arm,replications,mean,variance,sd\n"));
}

#[test]
fn replications_below_two_are_a_usage_error() {
    let run = prodex(&[
        "simulate",
        "--config",
        &config("case4.toml"),
        "--replications",
        "1",
    ]);
    assert_eq!(run.status, 2);
    assert!(run.stderr.contains("replication"), "{}", run.stderr);
}
