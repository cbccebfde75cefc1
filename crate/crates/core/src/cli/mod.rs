//! Command-line front end.

pub mod plot;
pub mod quant;
pub mod run;
pub mod selftest;
pub mod spec;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::model::Dataset;
use crate::model::sigmoid;
use crate::prox::QuantGrid;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SPGR_OUT_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_SELFTEST: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("self-test failed")]
    SelfTestFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::SelfTestFailed => EXIT_SELFTEST,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spgr", version, about = "Stochastic proximal gradient methods for nonconvex, nonsmooth problems")]
pub struct Cli {
    /// Seed overriding the spec's seed list (run) or the self-test seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = default_jobs())]
    pub jobs: usize,
    /// Directory for relative output paths.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every solver and seed of a TOML experiment spec.
    Run { spec: PathBuf },
    /// Check closed-form proximal maps against a brute-force oracle.
    SelftestProx {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
    },
    /// Check analytic gradients against central finite differences.
    SelftestGrad {
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
    /// Plot per-iteration medians from a trace CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = plot::XAxis::GradEvals)]
        x: plot::XAxis,
        #[arg(long, value_enum, default_value_t = plot::YAxis::F)]
        y: plot::YAxis,
        #[arg(long)]
        log_y: bool,
        /// Output file; relative paths resolve against --out.
        #[arg(long, default_value = "plot.svg")]
        output: PathBuf,
    },
    /// Test accuracy of a stored model, optionally projected onto a grid.
    EvalQuant {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Counts correct predictions of `1{σ(xᵀa) > ½}`, projecting `x` first when
/// a grid is given. Returns `(correct, total)`.
pub fn accuracy(x: &[f64], test: &Dataset, grid: Option<&QuantGrid>) -> (usize, usize) {
    let projected;
    let x = match grid {
        Some(g) => {
            projected = g.project(x);
            &projected[..]
        }
        None => x,
    };
    let correct = test
        .rows()
        .zip(test.labels())
        .filter(|(row, &b)| (sigmoid(row.dot(x)) > 0.5) == (b > 0.5))
        .count();
    (correct, test.n())
}

fn resolve_out(out: &std::path::Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        out.join(p)
    } else {
        p
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Run { spec } => {
            let opts = run::RunOptions { seed: cli.seed, jobs: cli.jobs, out_dir: cli.out };
            let report = run::cmd_run(&spec, &opts)?;
            print!("{}", report.summary);
            println!("wrote {}", report.csv_path.display());
            if report.all_ok {
                Ok(())
            } else {
                Err(CliError::Runtime("one or more runs failed".into()))
            }
        }
        Command::SelftestProx { cases } => {
            let report = selftest::prox_suite(cases, seed);
            print!("{}", report.render());
            if report.passed() { Ok(()) } else { Err(CliError::SelfTestFailed) }
        }
        Command::SelftestGrad { cases } => {
            let report = selftest::grad_suite(cases, seed);
            print!("{}", report.render());
            if report.passed() { Ok(()) } else { Err(CliError::SelfTestFailed) }
        }
        Command::Plot { csv, x, y, log_y, output } => {
            let out = resolve_out(&cli.out, output);
            plot::cmd_plot(&csv, &out, &plot::PlotOptions { x, y, log_y })?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::EvalQuant { model, test, grid } => {
            let r = quant::cmd_eval_quant(&model, grid.as_deref(), &test)?;
            println!("accuracy {:.6} ({}/{}), dimension {}", r.accuracy(), r.correct, r.total, r.dim);
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_entry<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_VALIDATION;
    }
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
