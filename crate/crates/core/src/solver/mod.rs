//! Proximal gradient loops, stationarity residuals and output selection.

mod bounds;
mod trace;

pub use bounds::{min_horizon, theoretical_bound, BoundConstants, BoundInputs, BoundKind};
pub use trace::{RunTrace, TraceRecord};

use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::estimators::{
    draw_batch, sarah_anchor, sarah_step, schedule_fixed_batch, schedule_increasing_batch, spgr_imb_schedule,
    AnchorBatch, BatchSchedule, EstimatorError, EstimatorState, Sampling, Setting,
};
use crate::model::{ModelError, Objective};
use crate::prox::{nnz, ExtReal, ProxError, QuantGrid, Regularizer};
use crate::rng::{self, SpgRng};

/// Objective values above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Longest horizon an accuracy target may translate into.
pub const MAX_HORIZON: usize = 100_000_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error("run diverged at iteration {at}")]
    Diverged { at: usize, trace: Box<RunTrace> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Pgd,
    MbSpg,
    Spgr,
    SpgrImb,
    HeuristicQsgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Pgd, Algorithm::MbSpg, Algorithm::Spgr, Algorithm::SpgrImb, Algorithm::HeuristicQsgd];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pgd => "PGD",
            Algorithm::MbSpg => "MBSPG",
            Algorithm::Spgr => "SPGR",
            Algorithm::SpgrImb => "SPGRIMB",
            Algorithm::HeuristicQsgd => "HeuristicQSGD",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }

    /// Exclusive upper end of the admissible step fraction `c`.
    pub fn c_upper(self) -> f64 {
        match self {
            Algorithm::Pgd | Algorithm::HeuristicQsgd => 1.0,
            Algorithm::MbSpg => 0.5,
            Algorithm::Spgr | Algorithm::SpgrImb => 1.0 / 3.0,
        }
    }

    pub fn default_c(self) -> f64 {
        match self {
            Algorithm::Pgd | Algorithm::HeuristicQsgd => 0.9,
            Algorithm::MbSpg => 0.45,
            Algorithm::Spgr | Algorithm::SpgrImb => 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Iterations(usize),
    /// Target accuracy `ε`; horizon and batch sizes follow from the bounds.
    Accuracy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub setting: Setting,
    /// `η = c/L`.
    pub c: f64,
    pub horizon: Horizon,
    pub schedule: BatchSchedule,
    pub seed: u64,
    pub residual_every: usize,
    /// Halve the step every this many iterations.
    pub step_decay: Option<usize>,
    pub sampling: Sampling,
    /// Stop once a measured residual is at or below this value.
    pub stop_residual: Option<f64>,
    /// Stop once this many gradient evaluations have been spent.
    pub max_grad_evals: Option<usize>,
    /// Log `‖g_t − ∇f(x_t)‖²` each iteration (costs a full gradient).
    pub track_estimator_error: bool,
    pub x0: Option<Vec<f64>>,
}

impl SolverConfig {
    /// Defaults: the algorithm's default `c`, 100 iterations, residual every
    /// 10 iterations, batch 1 (or the setting's SPGR schedule).
    pub fn new(algorithm: Algorithm, setting: Setting) -> Self {
        let schedule = match (algorithm, setting) {
            (Algorithm::Spgr, Setting::FiniteSum) => BatchSchedule::SpgrFiniteSum,
            (Algorithm::Spgr, Setting::Online) => BatchSchedule::SpgrOnline { s1: 64, s2: 8, q: 8 },
            (Algorithm::SpgrImb, _) => BatchSchedule::SpgrImb(1),
            _ => BatchSchedule::Fixed(1),
        };
        SolverConfig {
            algorithm,
            setting,
            c: algorithm.default_c(),
            horizon: Horizon::Iterations(100),
            schedule,
            seed: 0,
            residual_every: 10,
            step_decay: None,
            sampling: Sampling::WithReplacement,
            stop_residual: None,
            max_grad_evals: None,
            track_estimator_error: false,
            x0: None,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.horizon = Horizon::Iterations(t);
        self
    }

    pub fn with_accuracy(mut self, eps: f64) -> Self {
        self.horizon = Horizon::Accuracy(eps);
        self
    }

    pub fn with_schedule(mut self, schedule: BatchSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_residual_every(mut self, every: usize) -> Self {
        self.residual_every = every;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        let alg = self.algorithm;
        if !(self.c > 0.0 && self.c < alg.c_upper()) {
            return bad(format!("{} requires c in (0, {:.4}), got {}", alg.name(), alg.c_upper(), self.c));
        }
        match self.horizon {
            Horizon::Iterations(0) => return bad("T must be >= 1".into()),
            Horizon::Accuracy(e) if !(e > 0.0 && e.is_finite()) => return bad(format!("eps must be > 0, got {e}")),
            Horizon::Accuracy(_) if alg == Algorithm::HeuristicQsgd => {
                return bad("the heuristic quantized SGD baseline needs an iteration horizon".into())
            }
            _ => {}
        }
        if self.residual_every == 0 {
            return bad("residual_every must be >= 1".into());
        }
        if self.step_decay == Some(0) {
            return bad("step decay period must be >= 1".into());
        }
        self.schedule.validate()?;
        let ok = match (alg, self.schedule) {
            (Algorithm::Pgd, _) => true,
            (Algorithm::MbSpg, BatchSchedule::Fixed(_) | BatchSchedule::Increasing(_)) => true,
            (Algorithm::HeuristicQsgd, BatchSchedule::Fixed(_)) => true,
            (Algorithm::Spgr, BatchSchedule::SpgrOnline { .. }) => self.setting == Setting::Online,
            (Algorithm::Spgr, BatchSchedule::SpgrFiniteSum) => self.setting == Setting::FiniteSum,
            (Algorithm::SpgrImb, BatchSchedule::SpgrImb(_)) => true,
            _ => false,
        };
        if !ok {
            return bad(format!(
                "schedule {:?} is not valid for {} in the {} setting",
                self.schedule,
                alg.name(),
                self.setting.name()
            ));
        }
        Ok(())
    }
}

/// `‖∇f(x_next) − g_t − (x_next − x_t)/η‖`, an element of `∂̂F(x_next)`.
pub fn stationarity_residual(obj: &Objective<'_>, x_t: &[f64], x_next: &[f64], g_t: &[f64], eta: f64) -> f64 {
    assert!(eta > 0.0, "step size must be positive");
    residual_from_grad(&obj.full_gradient(x_next), x_t, x_next, g_t, eta)
}

fn residual_from_grad(grad_next: &[f64], x_t: &[f64], x_next: &[f64], g_t: &[f64], eta: f64) -> f64 {
    let inv = 1.0 / eta;
    grad_next
        .iter()
        .zip(g_t)
        .zip(x_next.iter().zip(x_t))
        .map(|((gn, g), (xn, x))| {
            let v = gn - g - inv * (xn - x);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Output index `R` uniform on `{1, …, T}`, drawn from the seed's output
/// stream before the run starts.
pub fn draw_output_index(horizon: usize, seed: u64) -> usize {
    assert!(horizon >= 1, "horizon must be >= 1");
    rng::stream(seed, rng::STREAM_OUTPUT).random_range(1..=horizon)
}

/// `(x_R, R)` of a finished run.
pub fn select_output(trace: &RunTrace) -> (&[f64], usize) {
    (&trace.x_r, trace.r_index)
}

/// What the loop exposes to an observer after each step.
pub struct StepView<'a> {
    pub t: usize,
    pub x_t: &'a [f64],
    pub x_next: &'a [f64],
    pub g_t: &'a [f64],
    pub eta: f64,
    pub residual: Option<f64>,
    pub anchor: bool,
}

pub type Observer<'o> = &'o mut dyn FnMut(&StepView<'_>);

enum Source {
    Full,
    MiniBatch { schedule: BatchSchedule, sampling: Sampling },
    Sarah { state: EstimatorState, anchor: AnchorBatch, s2: usize },
    Imb { state: EstimatorState, b: usize, stage: usize, s2: usize, finite_sum: bool },
}

struct Step {
    g: Vec<f64>,
    evals: usize,
    batch: usize,
    anchor: bool,
}

impl Source {
    fn next(
        &mut self,
        obj: &Objective<'_>,
        t: usize,
        x: &[f64],
        cached_grad: &mut Option<Vec<f64>>,
        rng: &mut SpgRng,
    ) -> Result<Step, SolverError> {
        match self {
            Source::Full => {
                let g = cached_grad.take().unwrap_or_else(|| obj.full_gradient(x));
                Ok(Step { g, evals: obj.n(), batch: obj.n(), anchor: true })
            }
            Source::MiniBatch { schedule, sampling } => {
                let m = match *schedule {
                    BatchSchedule::Fixed(m) => m,
                    BatchSchedule::Increasing(b) => schedule_increasing_batch(t, b),
                    _ => unreachable!("validated schedule"),
                };
                let idx = draw_batch(obj.n(), m, *sampling, rng)?;
                Ok(Step { g: obj.batch_grad(x, &idx), evals: m, batch: m, anchor: false })
            }
            Source::Sarah { state, anchor, s2 } => {
                let before = state.grad_evals;
                let (g, batch, is_anchor) = if state.at_boundary() {
                    let g = sarah_anchor(obj, state, x, *anchor, rng)?;
                    (g, anchor_size(obj, *anchor), true)
                } else {
                    (sarah_step(obj, state, x, *s2, rng)?, *s2, false)
                };
                Ok(Step { g, evals: state.grad_evals - before, batch, anchor: is_anchor })
            }
            Source::Imb { state, b, stage, s2, finite_sum } => {
                let before = state.grad_evals;
                let (g, batch, is_anchor) = if state.at_boundary() {
                    *stage += 1;
                    let sizes = spgr_imb_schedule(*stage, *b);
                    state.set_epoch_len(sizes.inner_len + 1);
                    *s2 = sizes.s2;
                    let a = if *finite_sum { AnchorBatch::Full } else { AnchorBatch::Sampled(sizes.s1) };
                    (sarah_anchor(obj, state, x, a, rng)?, anchor_size(obj, a), true)
                } else {
                    (sarah_step(obj, state, x, *s2, rng)?, *s2, false)
                };
                Ok(Step { g, evals: state.grad_evals - before, batch, anchor: is_anchor })
            }
        }
    }
}

fn anchor_size(obj: &Objective<'_>, a: AnchorBatch) -> usize {
    match a {
        AnchorBatch::Full => obj.n(),
        AnchorBatch::Sampled(m) => m,
    }
}

struct Plan {
    horizon: usize,
    source: Source,
    stop_residual: Option<f64>,
}

fn checked_horizon(t: f64, what: &str) -> Result<usize, SolverError> {
    if !(t.is_finite() && t <= MAX_HORIZON as f64) {
        return Err(SolverError::InvalidConfig(format!("{what} horizon {t:.3e} exceeds {MAX_HORIZON}")));
    }
    Ok((t.ceil() as usize).max(1))
}

fn plan(obj: &Objective<'_>, cfg: &SolverConfig, delta: f64) -> Result<Plan, SolverError> {
    let eta = cfg.c / obj.lipschitz;
    let k = BoundConstants::new(obj.lipschitz, eta)?;
    let n = obj.n();
    let dim = obj.dim();
    let eps = match cfg.horizon {
        Horizon::Accuracy(e) => Some(e),
        Horizon::Iterations(_) => None,
    };
    let fixed_t = match cfg.horizon {
        Horizon::Iterations(t) => t,
        Horizon::Accuracy(_) => 0,
    };
    let sigma2 = obj.sigma2;
    let det_t = |e: f64| (2.0 * k.theta + k.gamma * eta) * delta / (eta * k.theta * e * e);
    let mut stop_residual = cfg.stop_residual;

    let (horizon, source) = match cfg.algorithm {
        Algorithm::Pgd => {
            let t = match eps {
                Some(e) => checked_horizon(k.pgd_factor * delta / (e * e), "PGD")?,
                None => fixed_t,
            };
            (t, Source::Full)
        }
        Algorithm::MbSpg | Algorithm::HeuristicQsgd => match (eps, cfg.schedule) {
            (Some(e), BatchSchedule::Fixed(_)) => {
                let m = schedule_fixed_batch(cfg.c, sigma2, e)?;
                let t = checked_horizon(2.0 * k.c2 * delta / (eta * e * e), "MB-SPG")?;
                (t, Source::MiniBatch { schedule: BatchSchedule::Fixed(m), sampling: cfg.sampling })
            }
            (Some(e), BatchSchedule::Increasing(b)) => {
                let inp = BoundInputs { b, sigma2, delta_ub: delta, ..Default::default() };
                let t = min_horizon(BoundKind::IncreasingBatch, &k, &inp, e, MAX_HORIZON)?;
                (t, Source::MiniBatch { schedule: cfg.schedule, sampling: cfg.sampling })
            }
            (_, schedule) => (fixed_t, Source::MiniBatch { schedule, sampling: cfg.sampling }),
        },
        Algorithm::Spgr => {
            let (s2, q, anchor) = match (eps, cfg.schedule) {
                (Some(e), BatchSchedule::SpgrOnline { .. }) => {
                    let s1 = (k.gamma + 4.0 * k.theta * k.l) * sigma2 / (k.theta * k.l * e * e);
                    let s1 = checked_horizon(s1, "anchor batch")?;
                    let q = ((s1 as f64).sqrt().round() as usize).max(1);
                    (q, q, AnchorBatch::Sampled(s1))
                }
                (_, BatchSchedule::SpgrOnline { s1, s2, q }) => (s2, q, AnchorBatch::Sampled(s1)),
                (_, BatchSchedule::SpgrFiniteSum) => {
                    let q = (n as f64).sqrt().ceil() as usize;
                    (q, q, AnchorBatch::Full)
                }
                _ => unreachable!("validated schedule"),
            };
            let t = match (eps, cfg.setting) {
                (Some(e), Setting::Online) => checked_horizon(2.0 * det_t(e), "SPGR")?,
                (Some(e), Setting::FiniteSum) => checked_horizon(det_t(e), "SPGR")?,
                (None, _) => fixed_t,
            };
            let state = EstimatorState::new(dim, q);
            (t, Source::Sarah { state, anchor, s2 })
        }
        Algorithm::SpgrImb => {
            let b = match cfg.schedule {
                BatchSchedule::SpgrImb(b) => b,
                _ => unreachable!("validated schedule"),
            };
            let finite_sum = cfg.setting == Setting::FiniteSum;
            let t = match eps {
                Some(e) => {
                    let kind = if finite_sum { BoundKind::IncreasingRecursiveFiniteSum } else { BoundKind::IncreasingRecursiveOnline };
                    let inp = BoundInputs { b, sigma2, delta_ub: delta, ..Default::default() };
                    let inner = min_horizon(kind, &k, &inp, e, MAX_HORIZON)?;
                    // smallest S with bS(S+1)/2 ≥ inner; add one anchor per stage
                    let mut s = 0usize;
                    while b * s * (s + 1) / 2 < inner {
                        s += 1;
                    }
                    stop_residual = Some(stop_residual.map_or(e, |v| v.max(e)));
                    b * s * (s + 1) / 2 + s
                }
                None => fixed_t,
            };
            let state = EstimatorState::new(dim, 1);
            (t, Source::Imb { state, b, stage: 0, s2: b, finite_sum })
        }
    };
    Ok(Plan { horizon, source, stop_residual })
}

/// Horizon and batch schedule a run would use, with `Δ` bounded by `delta_ub`.
/// In accuracy mode the returned schedule carries the derived sizes.
pub fn planned_schedule(
    obj: &Objective<'_>,
    cfg: &SolverConfig,
    delta_ub: f64,
) -> Result<(usize, BatchSchedule), SolverError> {
    cfg.validate()?;
    let p = plan(obj, cfg, delta_ub)?;
    let schedule = match p.source {
        Source::Full => BatchSchedule::Fixed(obj.n()),
        Source::MiniBatch { schedule, .. } => schedule,
        Source::Sarah { anchor: AnchorBatch::Full, .. } => BatchSchedule::SpgrFiniteSum,
        Source::Sarah { anchor: AnchorBatch::Sampled(s1), state, s2 } => {
            BatchSchedule::SpgrOnline { s1, s2, q: state.q }
        }
        Source::Imb { b, .. } => BatchSchedule::SpgrImb(b),
    };
    Ok((p.horizon, schedule))
}

/// Runs the configured algorithm from `x₀` (zero unless set).
pub fn run(obj: &Objective<'_>, cfg: &SolverConfig) -> Result<RunTrace, SolverError> {
    run_observed(obj, cfg, None)
}

fn expect_algorithm(cfg: &SolverConfig, alg: Algorithm) -> Result<(), SolverError> {
    if cfg.algorithm == alg {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(format!("expected {} config, got {}", alg.name(), cfg.algorithm.name())))
    }
}

pub fn run_pgd(obj: &Objective<'_>, cfg: &SolverConfig) -> Result<RunTrace, SolverError> {
    expect_algorithm(cfg, Algorithm::Pgd)?;
    run(obj, cfg)
}

pub fn run_mb_spg(obj: &Objective<'_>, cfg: &SolverConfig) -> Result<RunTrace, SolverError> {
    expect_algorithm(cfg, Algorithm::MbSpg)?;
    run(obj, cfg)
}

pub fn run_spgr(obj: &Objective<'_>, cfg: &SolverConfig) -> Result<RunTrace, SolverError> {
    expect_algorithm(cfg, Algorithm::Spgr)?;
    run(obj, cfg)
}

pub fn run_spgr_imb(obj: &Objective<'_>, cfg: &SolverConfig) -> Result<RunTrace, SolverError> {
    expect_algorithm(cfg, Algorithm::SpgrImb)?;
    run(obj, cfg)
}

/// Heuristic quantized SGD: `x_{t+1} = x_t − η_t ∇f(P_Ω(x_t); ξ_t)`. The
/// objective's regularizer is ignored for the update; logged objective
/// values and sparsity refer to the quantized model `P_Ω(x_{t+1})`.
pub fn run_heuristic_qsgd(obj: &Objective<'_>, grid: &QuantGrid, cfg: &SolverConfig) -> Result<RunTrace, SolverError> {
    expect_algorithm(cfg, Algorithm::HeuristicQsgd)?;
    run_loop(obj, cfg, Some(grid), None)
}

/// [`run`] with a callback invoked after every step.
pub fn run_observed(obj: &Objective<'_>, cfg: &SolverConfig, observer: Option<Observer<'_>>) -> Result<RunTrace, SolverError> {
    if cfg.algorithm == Algorithm::HeuristicQsgd {
        let grid = match &obj.reg {
            Regularizer::Quantization { grid, .. } => grid.clone(),
            _ => {
                return Err(SolverError::InvalidConfig(
                    "the heuristic quantized SGD baseline needs a quantization regularizer".into(),
                ))
            }
        };
        return run_loop(obj, cfg, Some(&grid), observer);
    }
    run_loop(obj, cfg, None, observer)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn diverged(f: ExtReal, x: &[f64]) -> bool {
    match f {
        ExtReal::Finite(v) => !v.is_finite() || v > DIVERGENCE_LIMIT || x.iter().any(|v| !v.is_finite()),
        ExtReal::PosInfinity => true,
    }
}

fn run_loop(
    obj: &Objective<'_>,
    cfg: &SolverConfig,
    quant: Option<&QuantGrid>,
    mut observer: Option<Observer<'_>>,
) -> Result<RunTrace, SolverError> {
    cfg.validate()?;
    let start = Instant::now();
    let dim = obj.dim();
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
    if x0.len() != dim {
        return Err(ModelError::DimensionMismatch { expected: dim, got: x0.len() }.into());
    }
    let quantize = |x: &[f64]| quant.map(|g| g.project(x));
    let f0 = obj.full_objective(quantize(&x0).as_deref().unwrap_or(&x0))?;
    let delta = match f0 {
        ExtReal::Finite(v) => v,
        ExtReal::PosInfinity => return Err(SolverError::InvalidConfig("x0 is infeasible for the regularizer".into())),
    };
    let Plan { horizon, mut source, stop_residual } = plan(obj, cfg, delta)?;
    let eta0 = cfg.c / obj.lipschitz;
    let r_index = draw_output_index(horizon, cfg.seed);
    let mut rng = rng::stream(cfg.seed, rng::STREAM_SAMPLING);

    let mut trace = RunTrace {
        records: vec![TraceRecord {
            t: 0,
            grad_evals: 0,
            objective: f0,
            residual: None,
            nnz: nnz(quantize(&x0).as_deref().unwrap_or(&x0)),
            batch: 0,
            anchor: false,
            grad_error_sq: None,
            elapsed_ms: 0.0,
        }],
        x_final: x0.clone(),
        x_r: x0.clone(),
        r_index,
        x_best: x0.clone(),
        best_residual: None,
        wall_ms: 0.0,
        anchor_iters: 0,
        inner_iters: 0,
        diverged: false,
    };

    let mut x = x0;
    let mut x_next = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut grad_evals = 0usize;
    // full gradient at the current x, when a residual measurement left one
    let mut cached_grad: Option<Vec<f64>> = None;
    let mut stopped_at = horizon;

    for t in 0..horizon {
        let eta = match cfg.step_decay {
            Some(k) => eta0 * 0.5f64.powi((t / k).min(1000) as i32),
            None => eta0,
        };
        let x_eval = quantize(&x);
        let grad_point = x_eval.as_deref().unwrap_or(&x);
        let full_at_x = cfg
            .track_estimator_error
            .then(|| cached_grad.clone().unwrap_or_else(|| obj.full_gradient(grad_point)));
        if cached_grad.is_none() {
            cached_grad.clone_from(&full_at_x);
        }
        let step = source.next(obj, t, grad_point, &mut cached_grad, &mut rng)?;
        cached_grad = None;
        let grad_error_sq = full_at_x.map(|full| sq_dist(&step.g, &full));
        grad_evals += step.evals;
        if step.anchor {
            trace.anchor_iters += 1;
        } else {
            trace.inner_iters += 1;
        }

        for ((zi, xi), gi) in z.iter_mut().zip(&x).zip(&step.g) {
            *zi = xi - eta * gi;
        }
        if z.iter().any(|v| !v.is_finite()) {
            trace.diverged = true;
            trace.x_final = x.clone();
            trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            return Err(SolverError::Diverged { at: t + 1, trace: Box::new(trace) });
        }
        match quant {
            Some(_) => x_next.copy_from_slice(&z),
            None => obj.reg.prox_into(&z, eta, &mut x_next)?,
        }

        let model_next = quantize(&x_next);
        let model_view = model_next.as_deref().unwrap_or(&x_next);
        let objective = obj.full_objective(model_view)?;
        let measure = quant.is_none() && ((t + 1) % cfg.residual_every == 0 || t + 1 == horizon);
        let residual = if measure {
            let grad_next = obj.full_gradient(&x_next);
            let res = residual_from_grad(&grad_next, &x, &x_next, &step.g, eta);
            cached_grad = Some(grad_next);
            Some(res)
        } else {
            None
        };
        if let Some(obs) = observer.as_mut() {
            obs(&StepView { t, x_t: &x, x_next: &x_next, g_t: &step.g, eta, residual, anchor: step.anchor });
        }
        trace.records.push(TraceRecord {
            t: t + 1,
            grad_evals,
            objective,
            residual,
            nnz: nnz(model_view),
            batch: step.batch,
            anchor: step.anchor,
            grad_error_sq,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if let Some(res) = residual {
            if trace.best_residual.is_none_or(|b| res < b) {
                trace.best_residual = Some(res);
                trace.x_best.copy_from_slice(&x_next);
            }
        }
        if t + 1 == r_index {
            trace.x_r.copy_from_slice(&x_next);
        }
        std::mem::swap(&mut x, &mut x_next);
        if diverged(objective, &x) {
            trace.diverged = true;
            trace.x_final = x;
            trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            return Err(SolverError::Diverged { at: t + 1, trace: Box::new(trace) });
        }
        let hit_residual = matches!((stop_residual, residual), (Some(s), Some(r)) if r <= s);
        let hit_budget = cfg.max_grad_evals.is_some_and(|b| grad_evals >= b);
        if hit_residual || hit_budget {
            stopped_at = t + 1;
            break;
        }
    }

    if stopped_at < trace.r_index {
        // early stop before the pre-drawn index: report the last iterate
        trace.r_index = stopped_at;
        trace.x_r.copy_from_slice(&x);
    }
    if quant.is_some() {
        trace.x_best.copy_from_slice(&x);
    }
    trace.x_final = x;
    trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(trace)
}

#[cfg(test)]
mod tests;
