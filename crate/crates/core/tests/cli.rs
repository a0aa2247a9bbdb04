use std::path::Path;
use std::process::{Command, Output};

use spectral_pinn::report::{parse_trace_csv, read_report, REPORT_FILE, TRACE_FILE};

const SMALL_SOLVE: &str = r#"
subcommand = "solve"
seed = 5
lambda_ibc = 1.0

[problem]
name = "convection"
speed = 2.0

[[grid]]
basis = "chebyshev"
n = 10
interval = [0.0, 1.0]

[[grid]]
basis = "fourier"
n = 10
interval = [0.0, 6.283185307179586]

[[stages]]
optimizer = { kind = "nncg", steps = 6, rank = 20, cg_iters = 30 }

[train]
log_every = 2
"#;

fn spinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinn")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn list_problems_names_every_benchmark() {
    let out = spinn(&["list-problems"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["convection", "reaction", "wave", "burgers", "poisson"] {
        assert!(text.contains(name), "missing {name} in {text}");
    }
}

#[test]
fn interp_writes_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        spinn(&["interp", "--n", "8", "--m", "60", "--max-steps", "5000", "--quiet", "--out", path_str(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(report.kind, "interp");
    let err = report.final_metrics["l2re"];
    let direct = report.final_metrics["direct_l2re"];
    assert!(err.is_finite() && err < 1e-2, "l2re {err}");
    assert!(err <= 10.0 * direct + 1e-12, "gd {err} vs direct {direct}");
    let rows = parse_trace_csv(&std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert_eq!(rows[0].iteration, 0);
}

#[test]
fn epsop_probe_reports_second_order_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinn(&["probe", "epsop", "--trials", "20", "--quiet", "--out", path_str(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&dir.path().join(REPORT_FILE)).unwrap();
    let rate = report.final_metrics["decay_exponent"];
    assert!((1.7..=2.3).contains(&rate), "exponent {rate}");
    assert!(dir.path().join("epsop.csv").exists());
}

#[test]
fn solve_is_deterministic_and_rerunnable_from_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_SOLVE).unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let third = dir.path().join("c");
    for out in [&first, &second] {
        let o = spinn(&["solve", "--config", path_str(&cfg), "--quiet", "--out", path_str(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let trace_a = std::fs::read_to_string(first.join(TRACE_FILE)).unwrap();
    let trace_b = std::fs::read_to_string(second.join(TRACE_FILE)).unwrap();
    assert_eq!(trace_a, trace_b);

    let report = first.join(REPORT_FILE);
    let o = spinn(&["solve", "--config", path_str(&report), "--quiet", "--out", path_str(&third)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(third.join(TRACE_FILE)).unwrap(), trace_a);

    let r = read_report(&report).unwrap();
    assert_eq!(r.seed, 5);
    let rows = parse_trace_csv(&trace_a).unwrap();
    assert_eq!(rows.last().unwrap().iteration, 6);
    assert!(rows.last().unwrap().loss < rows[0].loss);
    assert!(first.join("model.ckpt").exists());
}

#[test]
fn unknown_config_key_exits_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "subcommand = \"solve\"\nsede = 3\n").unwrap();
    let out_dir = dir.path().join("out");
    let o = spinn(&["solve", "--config", path_str(&cfg), "--out", path_str(&out_dir)]);
    assert_eq!(o.status.code(), Some(2));
    let rec = std::fs::read_to_string(out_dir.join("error.json")).unwrap();
    assert!(rec.contains("\"config\""), "{rec}");
}

#[test]
fn unknown_problem_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinn(&["solve", "--problem", "heat", "--max-steps", "1", "--quiet", "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
