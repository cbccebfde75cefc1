//! `run`: execute every (solver, seed) pair of an experiment spec.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use super::plot::{self, PlotOptions};
use super::spec::{ExperimentSpec, Task, DEFAULT_NOISE_PROBES};
use super::{accuracy, CliError};
use crate::data::{self, SynthSpec};
use crate::model::{Dataset, Objective};
use crate::par::{self, Exec};
use crate::prox::{ExtReal, Regularizer};
use crate::rng;
use crate::solver::{self, RunTrace, SolverError};

/// Residual thresholds reported in the summary.
pub const SUMMARY_THRESHOLDS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Column order of the trace CSV.
pub const CSV_COLUMNS: [&str; 10] =
    ["run_id", "algorithm", "setting", "seed", "t", "grad_evals", "F", "exact_residual", "nnz", "wall_ms"];

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Replace the spec's seed list with this single seed.
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

/// Training set and optional held-out set.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

/// Loads or generates the dataset, then binarizes, splits and normalizes.
pub fn prepare_data(spec: &ExperimentSpec, base_dir: &Path) -> Result<PreparedData, CliError> {
    let ds = &spec.dataset;
    let task = spec.task();
    let full = if let Some(path) = &ds.path {
        let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
        let file = File::open(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let raw = data::parse_libsvm(BufReader::new(file), ds.dim)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if task == Task::Classification {
            data::binarize_labels(&raw).map_err(|e| CliError::Validation(e.to_string()))?
        } else {
            raw
        }
    } else {
        let s = ds.synthetic.as_ref().expect("validated: path or synthetic");
        let mut synth = SynthSpec::new(s.n, s.d);
        synth.row_nnz = s.row_nnz.unwrap_or(s.d);
        if let Some(k) = s.planted_nnz {
            synth.planted_nnz = k;
        }
        if let Some(p) = s.planted {
            synth.planted = p.into();
        }
        synth.noise = s.noise;
        synth.outlier_fraction = s.outlier_fraction;
        synth.seed = s.seed;
        let problem = match s.task {
            Task::Classification => data::synth_classification(&synth),
            Task::Regression => data::synth_regression(&synth),
        };
        problem.map_err(|e| CliError::Validation(e.to_string()))?.data
    };
    let mode = spec.norm_mode();
    let (train, test) = match ds.test_fraction {
        Some(frac) => {
            let (tr, te) = data::train_test_split(&full, 1.0 - frac, ds.split_seed.unwrap_or(0))
                .map_err(|e| CliError::Validation(e.to_string()))?;
            (tr, Some(te))
        }
        None => (full, None),
    };
    Ok(PreparedData {
        train: data::normalize_features(&train, mode),
        test: test.map(|t| data::normalize_features(&t, mode)),
    })
}

/// Outcome of one (solver, seed) pair.
#[derive(Debug)]
pub struct RunOutcome {
    pub run_id: usize,
    pub solver_index: usize,
    pub label: String,
    pub algorithm: &'static str,
    pub setting: &'static str,
    pub seed: u64,
    pub trace: Option<RunTrace>,
    pub error: Option<String>,
    pub test_accuracy: Option<f64>,
}

impl RunOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug)]
pub struct Experiment {
    pub lipschitz: f64,
    pub sigma2: f64,
    pub f_x0: f64,
    pub outcomes: Vec<RunOutcome>,
}

fn solver_labels(spec: &ExperimentSpec) -> Vec<String> {
    let base: Vec<String> =
        spec.solvers.iter().map(|s| format!("{}/{}", s.algorithm().name(), s.setting().name())).collect();
    base.iter()
        .enumerate()
        .map(|(i, b)| if base.iter().filter(|o| *o == b).count() > 1 { format!("{b}#{i}") } else { b.clone() })
        .collect()
}

/// Runs all pairs; divergence and per-run failures are recorded, not raised.
pub fn execute(spec: &ExperimentSpec, data: &PreparedData, opts: &RunOptions) -> Result<Experiment, CliError> {
    let train = &data.train;
    let loss = spec.loss.build(train.n());
    let reg = spec.regularizer.build(train.dim()).map_err(CliError::Validation)?;
    let mut obj = Objective::new(loss, reg.clone(), train).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(l) = spec.lipschitz {
        obj = obj.with_lipschitz(l).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let sigma2 = match spec.sigma2 {
        Some(s) => s,
        None => {
            let probes = spec.noise_probes.unwrap_or(DEFAULT_NOISE_PROBES).max(2);
            let mut probe_rng = rng::stream(0, rng::STREAM_PROBE);
            obj.estimate_noise_variance(&vec![0.0; train.dim()], probes, &mut probe_rng)
        }
    };
    let obj = obj.with_sigma2(sigma2).map_err(|e| CliError::Validation(e.to_string()))?;

    let seeds: Vec<u64> = match opts.seed {
        Some(s) => vec![s],
        None => spec.seeds.clone(),
    };
    let labels = solver_labels(spec);
    let mut pairs = Vec::new();
    for (si, s) in spec.solvers.iter().enumerate() {
        for &seed in &seeds {
            let cfg = s.build(seed).map_err(|e| CliError::Validation(format!("solver {si}: {e}")))?;
            pairs.push((si, seed, cfg));
        }
    }
    log::info!("L = {:.6e}, sigma^2 = {:.6e}, F(x0) = {:.6e}, {} runs", obj.lipschitz, sigma2, obj.f_x0, pairs.len());

    let grid = match &reg {
        Regularizer::Quantization { grid, .. } => Some(grid.clone()),
        _ => None,
    };
    let outcomes = par::with_jobs(opts.jobs, || {
        par::map_indexed(Exec::Parallel, pairs.len(), |run_id| {
            let (si, seed, cfg) = &pairs[run_id];
            let (trace, error) = match solver::run(&obj, cfg) {
                Ok(t) => (Some(t), None),
                Err(SolverError::Diverged { at, trace }) => (Some(*trace), Some(format!("diverged at iteration {at}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            let test_accuracy = match (&trace, &data.test, spec.task()) {
                (Some(tr), Some(test), Task::Classification) => {
                    let (correct, n) = accuracy(&tr.x_r, test, grid.as_ref());
                    Some(correct as f64 / n as f64)
                }
                _ => None,
            };
            if let Some(e) = &error {
                log::warn!("run {run_id} ({} seed {seed}): {e}", labels[*si]);
            }
            RunOutcome {
                run_id,
                solver_index: *si,
                label: labels[*si].clone(),
                algorithm: cfg.algorithm.name(),
                setting: cfg.setting.name(),
                seed: *seed,
                trace,
                error,
                test_accuracy,
            }
        })
    });
    Ok(Experiment { lipschitz: obj.lipschitz, sigma2, f_x0: obj.f_x0, outcomes })
}

fn fmt_ext(v: ExtReal) -> String {
    match v {
        ExtReal::Finite(f) => f.to_string(),
        ExtReal::PosInfinity => "inf".into(),
    }
}

/// Trace rows in run-id order.
pub fn write_csv<W: Write>(outcomes: &[RunOutcome], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Runtime(format!("writing CSV: {e}"));
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for o in outcomes {
        let Some(trace) = &o.trace else { continue };
        for r in &trace.records {
            w.write_record([
                o.run_id.to_string(),
                o.algorithm.to_string(),
                o.setting.to_string(),
                o.seed.to_string(),
                r.t.to_string(),
                r.grad_evals.to_string(),
                fmt_ext(r.objective),
                r.residual.map(|v| v.to_string()).unwrap_or_default(),
                r.nnz.to_string(),
                format!("{:.3}", r.elapsed_ms),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::Runtime(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Median with missing values treated as `+∞`; `None` if the median is missing.
pub fn median_reached(values: &[Option<usize>]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<usize> = values.iter().map(|x| x.unwrap_or(usize::MAX)).collect();
    v.sort_unstable();
    let m = v[(v.len() - 1) / 2];
    (m != usize::MAX).then_some(m)
}

fn median_f64(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

/// Per-solver medians over seeds.
pub fn summary(spec: &ExperimentSpec, exp: &Experiment) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "L = {:.6e}  sigma^2 = {:.6e}  F(x0) = {:.6e}", exp.lipschitz, exp.sigma2, exp.f_x0);
    let _ = write!(s, "{:<24} {:>5} {:>7}", "solver", "runs", "failed");
    for tau in SUMMARY_THRESHOLDS {
        let _ = write!(s, " {:>14}", format!("evals@{tau:.0e}"));
    }
    let _ = writeln!(s, " {:>14} {:>9}", "median_F", "test_acc");
    for (si, label) in solver_labels(spec).iter().enumerate() {
        let runs: Vec<&RunOutcome> = exp.outcomes.iter().filter(|o| o.solver_index == si).collect();
        let failed = runs.iter().filter(|o| !o.ok()).count();
        let _ = write!(s, "{:<24} {:>5} {:>7}", label, runs.len(), failed);
        for tau in SUMMARY_THRESHOLDS {
            let reached: Vec<Option<usize>> =
                runs.iter().map(|o| o.trace.as_ref().and_then(|t| t.evals_to_residual(tau))).collect();
            let cell = median_reached(&reached).map_or("-".to_string(), |v| v.to_string());
            let _ = write!(s, " {cell:>14}");
        }
        let finals: Vec<f64> = runs
            .iter()
            .filter_map(|o| o.trace.as_ref().and_then(|t| t.final_objective()).and_then(|f| f.finite()))
            .collect();
        let f_cell = median_f64(finals).map_or("-".to_string(), |v| format!("{v:.6e}"));
        let accs: Vec<f64> = runs.iter().filter_map(|o| o.test_accuracy).collect();
        let acc_cell = median_f64(accs).map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, " {f_cell:>14} {acc_cell:>9}");
    }
    s
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        out_dir.join(p)
    } else {
        p.to_path_buf()
    }
}

fn create_parent(p: &Path) -> Result<(), CliError> {
    if let Some(dir) = p.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        }
    }
    Ok(())
}

/// What `cmd_run` reports back.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub all_ok: bool,
    pub summary: String,
    pub csv_path: PathBuf,
}

/// Reads the spec, runs it and writes the outputs.
pub fn cmd_run(spec_path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", spec_path.display())))?;
    let spec = ExperimentSpec::from_toml(&text).map_err(|e| CliError::Validation(format!("{}: {e}", spec_path.display())))?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let data = prepare_data(&spec, base)?;
    let exp = execute(&spec, &data, opts)?;

    let csv_path = resolve(&opts.out_dir, &spec.outputs.csv);
    create_parent(&csv_path)?;
    let file = File::create(&csv_path).map_err(|e| CliError::Runtime(format!("{}: {e}", csv_path.display())))?;
    write_csv(&exp.outcomes, file)?;

    let text = summary(&spec, &exp);
    if let Some(p) = &spec.outputs.summary {
        let p = resolve(&opts.out_dir, p);
        create_parent(&p)?;
        fs::write(&p, &text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    }
    if let Some(p) = &spec.outputs.svg {
        let p = resolve(&opts.out_dir, p);
        create_parent(&p)?;
        plot::cmd_plot(&csv_path, &p, &PlotOptions::default())?;
    }
    if let Some(dir) = &spec.outputs.model_dir {
        let dir = resolve(&opts.out_dir, dir);
        fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        for o in &exp.outcomes {
            if let Some(t) = &o.trace {
                let body: String = t.x_r.iter().map(|v| format!("{v}\n")).collect();
                let p = dir.join(format!("run_{}.txt", o.run_id));
                fs::write(&p, body).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            }
        }
    }
    Ok(RunReport { all_ok: exp.outcomes.iter().all(RunOutcome::ok), summary: text, csv_path })
}
