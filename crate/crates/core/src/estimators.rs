//! Stochastic gradient estimators and batch-size schedules.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::model::Objective;
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("recursive step requested at epoch boundary (position {pos}, epoch length {q})")]
    EpochBoundary { pos: usize, q: usize },
    #[error("recursive step requested before any anchor")]
    Uninitialized,
    #[error("cannot draw {m} distinct samples from {n}")]
    BatchTooLarge { m: usize, n: usize },
}

/// Whether `f` is treated as an expectation or an explicit finite average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Online,
    FiniteSum,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Online => "online",
            Setting::FiniteSum => "finite_sum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSchedule {
    Fixed(usize),
    /// `m_t = b(t+1)`.
    Increasing(usize),
    SpgrOnline { s1: usize, s2: usize, q: usize },
    /// `|S₁| = n`, `q = |S₂| = ⌈√n⌉`.
    SpgrFiniteSum,
    /// Stage `s` uses `|S₁| = b²s²`, `|S₂| = bs`, `bs` inner steps.
    SpgrImb(usize),
}

impl BatchSchedule {
    /// Online SPGR schedule with `q = |S₂| = round(√|S₁|)`.
    pub fn spgr_online(s1: usize) -> Result<Self, EstimatorError> {
        if s1 == 0 {
            return Err(EstimatorError::InvalidParameter("|S1| must be >= 1".into()));
        }
        let q = ((s1 as f64).sqrt().round() as usize).max(1);
        Ok(BatchSchedule::SpgrOnline { s1, s2: q, q })
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let ok = match *self {
            BatchSchedule::Fixed(m) | BatchSchedule::Increasing(m) | BatchSchedule::SpgrImb(m) => m >= 1,
            BatchSchedule::SpgrOnline { s1, s2, q } => s1 >= 1 && s2 >= 1 && q >= 1,
            BatchSchedule::SpgrFiniteSum => true,
        };
        if ok {
            Ok(())
        } else {
            Err(EstimatorError::InvalidParameter(format!("batch sizes must be >= 1 in {self:?}")))
        }
    }
}

/// Draws `m` indices from `0..n`, returned in ascending order.
pub fn draw_batch<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<Vec<usize>, EstimatorError> {
    if m == 0 {
        return Err(EstimatorError::InvalidParameter("batch size must be >= 1".into()));
    }
    let mut idx = match sampling {
        Sampling::WithReplacement => (0..m).map(|_| rng.random_range(0..n)).collect::<Vec<_>>(),
        Sampling::WithoutReplacement => {
            if m > n {
                return Err(EstimatorError::BatchTooLarge { m, n });
            }
            index::sample(rng, n, m).into_vec()
        }
    };
    idx.sort_unstable();
    Ok(idx)
}

/// Average of `m` sample gradients; returns `(g, evals = m)`.
pub fn minibatch_grad<R: Rng + ?Sized>(
    obj: &Objective<'_>,
    x: &[f64],
    m: usize,
    rng: &mut R,
    sampling: Sampling,
) -> Result<(Vec<f64>, usize), EstimatorError> {
    let idx = draw_batch(obj.n(), m, sampling, rng)?;
    Ok((obj.batch_grad(x, &idx), m))
}

fn check_c(c: f64, hi: f64, name: &str) -> Result<(), EstimatorError> {
    if c > 0.0 && c < hi {
        Ok(())
    } else {
        Err(EstimatorError::InvalidParameter(format!("{name} requires c in (0, {hi}), got {c}")))
    }
}

/// `c₁ = (2c(1−2c)+2)/(c(1−2c))`.
pub fn mbspg_c1(c: f64) -> f64 {
    let k = c * (1.0 - 2.0 * c);
    (2.0 * k + 2.0) / k
}

/// `c₂ = (6−4c)/(1−2c)`.
pub fn mbspg_c2(c: f64) -> f64 {
    (6.0 - 4.0 * c) / (1.0 - 2.0 * c)
}

/// Fixed batch `m = ⌈2c₁σ²/ε²⌉`, at least 1.
pub fn schedule_fixed_batch(c: f64, sigma2: f64, eps: f64) -> Result<usize, EstimatorError> {
    check_c(c, 0.5, "fixed mini-batch schedule")?;
    if !(eps > 0.0) || !(sigma2 >= 0.0) {
        return Err(EstimatorError::InvalidParameter(format!("need eps > 0 and sigma^2 >= 0, got {eps}, {sigma2}")));
    }
    let m = (2.0 * mbspg_c1(c) * sigma2 / (eps * eps)).ceil();
    Ok((m as usize).max(1))
}

/// `m_t = b(t+1)`.
pub fn schedule_increasing_batch(t: usize, b: usize) -> usize {
    b * (t + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImbStage {
    pub s1: usize,
    pub s2: usize,
    pub inner_len: usize,
}

/// Stage `s ≥ 1` sizes: `(b²s², bs, bs)`.
pub fn spgr_imb_schedule(s: usize, b: usize) -> ImbStage {
    assert!(s >= 1 && b >= 1, "stage index and b must be >= 1");
    ImbStage { s1: b * b * s * s, s2: b * s, inner_len: b * s }
}

/// Size of an anchor batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorBatch {
    /// Exact full gradient over all `n` samples.
    Full,
    /// `m` samples drawn with replacement.
    Sampled(usize),
}

/// Recursive SARAH/SPIDER estimator state.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub g_prev: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub pos_in_epoch: usize,
    pub q: usize,
    pub grad_evals: usize,
    anchored: bool,
}

impl EstimatorState {
    pub fn new(dim: usize, q: usize) -> Self {
        assert!(q >= 1, "epoch length must be >= 1");
        EstimatorState {
            g_prev: vec![0.0; dim],
            x_prev: vec![0.0; dim],
            pos_in_epoch: 0,
            q,
            grad_evals: 0,
            anchored: false,
        }
    }

    /// Changes the epoch length for the next epoch (staged schedules).
    pub fn set_epoch_len(&mut self, q: usize) {
        assert!(q >= 1, "epoch length must be >= 1");
        self.q = q;
    }

    /// True when the next step must be an anchor.
    pub fn at_boundary(&self) -> bool {
        !self.anchored || self.pos_in_epoch + 1 >= self.q
    }
}

/// Resets the estimator at `x`: `g = ∇f_{S₁}(x)`.
pub fn sarah_anchor<R: Rng + ?Sized>(
    obj: &Objective<'_>,
    state: &mut EstimatorState,
    x: &[f64],
    batch: AnchorBatch,
    rng: &mut R,
) -> Result<Vec<f64>, EstimatorError> {
    let g = match batch {
        AnchorBatch::Full => {
            state.grad_evals += obj.n();
            obj.full_gradient(x)
        }
        AnchorBatch::Sampled(m) => {
            let (g, evals) = minibatch_grad(obj, x, m, rng, Sampling::WithReplacement)?;
            state.grad_evals += evals;
            g
        }
    };
    state.g_prev.clone_from(&g);
    state.x_prev.clear();
    state.x_prev.extend_from_slice(x);
    state.pos_in_epoch = 0;
    state.anchored = true;
    Ok(g)
}

/// `g_t = ∇f_{S₂}(x_t) − ∇f_{S₂}(x_{t−1}) + g_{t−1}` with one batch of
/// `s2` draws shared by both points.
pub fn sarah_step<R: Rng + ?Sized>(
    obj: &Objective<'_>,
    state: &mut EstimatorState,
    x: &[f64],
    s2: usize,
    rng: &mut R,
) -> Result<Vec<f64>, EstimatorError> {
    check_step(state)?;
    let idx = draw_batch(obj.n(), s2, Sampling::WithReplacement, rng)?;
    sarah_step_with_indices(obj, state, x, &idx)
}

fn check_step(state: &EstimatorState) -> Result<(), EstimatorError> {
    if !state.anchored {
        return Err(EstimatorError::Uninitialized);
    }
    if state.pos_in_epoch + 1 >= state.q {
        return Err(EstimatorError::EpochBoundary { pos: state.pos_in_epoch + 1, q: state.q });
    }
    Ok(())
}

/// [`sarah_step`] on a caller-supplied batch.
pub fn sarah_step_with_indices(
    obj: &Objective<'_>,
    state: &mut EstimatorState,
    x: &[f64],
    indices: &[usize],
) -> Result<Vec<f64>, EstimatorError> {
    check_step(state)?;
    if indices.is_empty() {
        return Err(EstimatorError::InvalidParameter("batch size must be >= 1".into()));
    }
    let m = indices.len();
    let x_prev = &state.x_prev;
    // per-sample link derivatives are differenced first so that x = x_prev
    // contributes exact zeros
    let diff = par::chunked_sum(obj.exec, m, obj.dim(), |range, acc| {
        for &i in &indices[range] {
            let row = obj.data.row(i);
            let label = obj.data.label(i);
            let (_, d_now) = obj.loss.link(row.dot(x), label);
            let (_, d_prev) = obj.loss.link(row.dot(x_prev), label);
            row.axpy(d_now - d_prev, acc);
        }
    });
    let inv = 1.0 / m as f64;
    let g: Vec<f64> = diff.iter().zip(&state.g_prev).map(|(d, gp)| d * inv + gp).collect();
    state.g_prev.clone_from(&g);
    state.x_prev.clear();
    state.x_prev.extend_from_slice(x);
    state.pos_in_epoch += 1;
    state.grad_evals += 2 * m;
    Ok(g)
}
