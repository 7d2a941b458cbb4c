use std::path::Path;
use std::process::{Command, Output};
use szolp::problems::by_name;
use szolp::solver::{run, SolverConfig};
use szolp_cli::trace::{read_trace, write_trace, Format};
use tempfile::tempdir;

fn szolp(args: &[&str], trace_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_szolp"));
    cmd.args(args).env_remove("SZOLP_TRACE_DIR");
    if let Some(dir) = trace_dir {
        cmd.env("SZOLP_TRACE_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("corner.csv");
    let out = szolp(
        &["run", "--problem", "qp-corner", "--eps0", "0.05", "--eps-min", "1e-6", "--trace-out", trace.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("termination        eps_min"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("corner.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"], "eps_min");
    assert_eq!(summary["infeasible_samples"], 0);

    // The emitted trace matches an in-process run row for row, up to timing.
    let rows = read_trace(std::fs::File::open(&trace).unwrap(), Format::Csv).unwrap();
    let named = by_name("qp-corner").unwrap();
    let expected = run(&*named.problem, &named.start, SolverConfig::default()).unwrap().trace;
    assert_eq!(rows.len(), expected.len());
    for (a, b) in rows.iter().zip(&expected) {
        assert_eq!((a.k, a.eps, a.action, a.f0, a.max_fi), (b.k, b.eps, b.action, b.f0, b.max_fi));
        assert_eq!((a.n_active, a.pred_descent, a.alpha, a.samples), (b.n_active, b.pred_descent, b.alpha, b.samples));
    }

    // Re-serializing the parsed rows reproduces the file byte for byte.
    let mut again = Vec::new();
    write_trace(&rows, Format::Csv, &mut again).unwrap();
    assert_eq!(again, std::fs::read(&trace).unwrap());
}

#[test]
fn jsonl_trace_goes_to_trace_dir() {
    let dir = tempdir().unwrap();
    let out = szolp(&["run", "--problem", "one-d", "--format", "jsonl", "--lp-debug"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace = dir.path().join("one-d-trace.jsonl");
    let rows = read_trace(std::fs::File::open(&trace).unwrap(), Format::Jsonl).unwrap();
    assert!(!rows.is_empty());
    let dump = std::fs::read_to_string(dir.path().join("one-d-trace.lp.txt")).unwrap();
    assert!(dump.contains("## initial") && dump.contains("## optimal"));
}

#[test]
fn negative_eps0_is_a_usage_error() {
    let out = szolp(&["run", "--problem", "qp-corner", "--eps0", "-1"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eps0 must be positive"));
}

#[test]
fn unknown_flag_and_missing_source_are_usage_errors() {
    assert_eq!(szolp(&["run", "--problem", "one-d", "--bogus"], None).status.code(), Some(2));
    assert_eq!(szolp(&["run"], None).status.code(), Some(2));
    assert_eq!(szolp(&["run", "--problem", "one-d", "--format", "xml"], None).status.code(), Some(2));
}

#[test]
fn unknown_problem_and_unreadable_case_fail_to_load() {
    let out = szolp(&["run", "--problem", "nope"], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("unknown problem 'nope'"));
    let out = szolp(&["run", "--case", "/nonexistent/case30.m"], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cannot read case file"));
}

#[test]
fn malformed_case_fails_to_load() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("broken.m");
    std::fs::write(&path, "mpc.baseMVA = 100;\n").unwrap();
    let out = szolp(&["run", "--case", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("invalid case file"));
}

#[test]
fn infeasible_start_has_its_own_exit_code() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("hot.m");
    // Raise the slack voltage setpoint above its 1.1 limit.
    let text = szolp_powerflow::CASE30.replacen("1.04\t100", "1.12\t100", 1);
    assert_ne!(text, szolp_powerflow::CASE30);
    std::fs::write(&path, text).unwrap();
    let out = szolp(&["run", "--case", path.to_str().unwrap()], Some(dir.path()));
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("not strictly feasible"));
}

#[test]
fn case_file_run_with_experiment_constants() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("case30.m");
    std::fs::write(&path, szolp_powerflow::CASE30).unwrap();
    let out = szolp(
        &["run", "--case", path.to_str().unwrap(), "--M", "0.13", "--L", "0.5", "--k-switch", "200", "--max-iters", "20"],
        Some(dir.path()),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("termination        max_iters"));
    assert!(text.contains("(0 infeasible)"));
    let rows = read_trace(std::fs::File::open(dir.path().join("case30-trace.csv")).unwrap(), Format::Csv).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.windows(2).all(|w| w[1].f0 <= w[0].f0));
}

#[test]
fn smoothness_file_must_match_problem() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("constants.csv");
    std::fs::write(&path, "lipschitz,curvature\n1,1\n").unwrap();
    let out = szolp(&["run", "--problem", "qp-corner", "--smoothness", path.to_str().unwrap()], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&path, "lipschitz,curvature\n6,2\n1,2\n1,2\n").unwrap();
    let out = szolp(&["run", "--problem", "qp-corner", "--smoothness", path.to_str().unwrap()], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn check_suites_report_per_suite() {
    let out = szolp(&["check", "--suite", "lp", "--seed", "7"], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("[PASS] lp: 1000 instances"));
    let out = szolp(&["check", "--suite", "kkt"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("qp-corner") && text.contains("[PASS] kkt"));
    let out = szolp(&["check", "--suite", "safety", "--seed", "7"], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("0 not strictly feasible"));
}
