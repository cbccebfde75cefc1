use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spgr::cli::plot::{parse_trace_csv, render_svg, PlotOptions, XAxis, YAxis};
use spgr::cli::run::{cmd_run, RunOptions, CSV_COLUMNS};
use spgr::cli::spec::ExperimentSpec;
use spgr::cli::{main_entry, EXIT_OK, EXIT_RUNTIME, EXIT_SELFTEST, EXIT_VALIDATION, OUT_DIR_ENV};

const SPEC: &str = r#"
seeds = [1, 2]

[dataset.synthetic]
task = "classification"
n = 120
d = 15
noise = 0.1

[loss]
kind = "nlls"

[regularizer]
kind = "l0_ball"
k = 4

[[solvers]]
algorithm = "PGD"
setting = "finite_sum"
iterations = 20

[[solvers]]
algorithm = "SPGR"
setting = "finite_sum"
iterations = 30
residual_every = 1

[outputs]
csv = "trace.csv"
svg = "trace.svg"
summary = "summary.txt"
model_dir = "models"
"#;

fn spgr(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spgr"));
    cmd.args(args).env_remove(OUT_DIR_ENV);
    if let Some(dir) = out_env {
        cmd.env(OUT_DIR_ENV, dir);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> u8 {
    o.status.code().expect("exit code") as u8
}

#[test]
fn run_writes_all_outputs_into_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    let out = dir.path().join("from_env");
    let o = spgr(&["run", spec.to_str().unwrap(), "--jobs", "2"], Some(&out));
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "trace.svg", "summary.txt", "models/run_0.txt", "models/run_3.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("SPGR/finite_sum"), "{stdout}");

    let text = fs::read_to_string(out.join("trace.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, CSV_COLUMNS.join(","));
    let rows = parse_trace_csv(&text).unwrap();
    assert_eq!(rows.len(), 2 * 21 + 2 * 31);
    assert!(rows.iter().all(|r| r.nnz <= 4));
    // residuals are measured every step for the second solver only
    assert!(rows.iter().filter(|r| r.algorithm == "SPGR" && r.t > 0).all(|r| r.residual.is_some()));

    // --out overrides the environment
    let explicit = dir.path().join("explicit");
    let o = spgr(&["run", spec.to_str().unwrap(), "--out", explicit.to_str().unwrap(), "--seed", "9"], Some(&out));
    assert_eq!(code(&o), EXIT_OK);
    let rows = parse_trace_csv(&fs::read_to_string(explicit.join("trace.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.seed == 9));
    assert_eq!(rows.iter().map(|r| r.run_id).max(), Some(1));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SPEC.replace("noise = 0.1", "noise = 0.1\nunknown_key = 3")).unwrap();
    assert_eq!(code(&spgr(&["run", bad.to_str().unwrap()], Some(dir.path()))), EXIT_VALIDATION);
    let bad_c = dir.path().join("bad_c.toml");
    fs::write(&bad_c, SPEC.replace("iterations = 30", "iterations = 30\nc = 0.5")).unwrap();
    let o = spgr(&["run", bad_c.to_str().unwrap()], Some(dir.path()));
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(String::from_utf8_lossy(&o.stderr).contains("c in (0"));
    assert_eq!(code(&spgr(&["run", "/nonexistent/spec.toml"], None)), EXIT_VALIDATION);
    assert_eq!(code(&spgr(&["no-such-command"], None)), EXIT_VALIDATION);
    assert_eq!(main_entry(["spgr", "selftest-grad", "--jobs", "0"]), EXIT_VALIDATION);
}

#[test]
fn divergence_exits_two_and_keeps_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    let diverging = SPEC
        .replace("kind = \"l0_ball\"\nk = 4", "kind = \"l1\"\nlambda = 1e-6")
        .replace("seeds = [1, 2]", "seeds = [1]\nlipschitz = 1e-300");
    fs::write(&spec, diverging).unwrap();
    let o = spgr(&["run", spec.to_str().unwrap()], Some(dir.path()));
    assert_eq!(code(&o), EXIT_RUNTIME, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn self_tests_pass_and_report() {
    let o = spgr(&["selftest-prox", "--cases", "100", "--seed", "3"], None);
    assert_eq!(code(&o), EXIT_OK);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("PASS").count(), 6, "{stdout}");
    let o = spgr(&["selftest-grad", "--cases", "20"], None);
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(EXIT_SELFTEST, 3);
}

#[test]
fn spec_round_trip_through_toml() {
    let spec = ExperimentSpec::from_toml(SPEC).unwrap();
    assert_eq!(ExperimentSpec::from_toml(&spec.to_toml()).unwrap(), spec);
}

#[test]
fn plot_from_run_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    let report = cmd_run(&spec, &RunOptions { seed: None, jobs: 1, out_dir: dir.path().to_path_buf() }).unwrap();
    assert!(report.all_ok);
    let csv = dir.path().join("trace.csv");
    let o = spgr(
        &["plot", csv.to_str().unwrap(), "--y", "exact_residual", "--x", "t", "--log-y", "--output", "r.svg"],
        Some(dir.path()),
    );
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(dir.path().join("r.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    // PGD and SPGR, both finite-sum and therefore dashed
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(svg.matches("stroke-dasharray").count(), 4);
    assert!(svg.contains("iteration t") && svg.contains("log10 exact residual"));

    let rows = parse_trace_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    let default = render_svg(&rows, &PlotOptions::default()).unwrap();
    assert!(default.contains("stochastic gradient evaluations") && default.contains("F(x)"));
    let opts = PlotOptions { x: XAxis::GradEvals, y: YAxis::ExactResidual, log_y: false };
    assert!(render_svg(&rows, &opts).is_ok());

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "run_id,algorithm\n0,PGD\n").unwrap();
    assert_eq!(code(&spgr(&["plot", broken.to_str().unwrap()], Some(dir.path()))), EXIT_VALIDATION);
}

#[test]
fn eval_quant_projects_and_checks_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.txt");
    let grid = dir.path().join("grid.txt");
    let test = dir.path().join("test.svm");
    fs::write(&model, "0.4\n-0.2\n0.1\n").unwrap();
    fs::write(&grid, "-1, 1").unwrap();
    // labels in {1, 2}: the smaller value maps to 0
    fs::write(&test, "2 1:1 2:1\n1 1:-1 3:0.5\n2 2:-3\n").unwrap();
    let args = |g: bool| {
        let mut v = vec!["eval-quant", "--model", model.to_str().unwrap(), "--test", test.to_str().unwrap()];
        if g {
            v.extend(["--grid", grid.to_str().unwrap()]);
        }
        v
    };
    let o = spgr(&args(false), None);
    assert_eq!(code(&o), EXIT_OK);
    // raw model: margins 0.2, -0.35, 0.6 -> predictions 1, 0, 1; labels 1, 0, 1
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy 1.000000 (3/3)"));
    let o = spgr(&args(true), None);
    assert_eq!(code(&o), EXIT_OK);
    // projected model (1, -1, 1): margins 0, -0.5, 3 -> predictions 0, 0, 1
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy 0.666667 (2/3)"));

    fs::write(&test, "1 1:1 5:1\n0 2:1\n").unwrap();
    let o = spgr(&args(false), None);
    assert_eq!(code(&o), EXIT_VALIDATION);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension"));
}
