//! Right-hand sides of the stationarity guarantees, with `Δ` replaced by an
//! upper bound (normally `F(x₀)`).

use super::SolverError;
use crate::estimators::{mbspg_c1, mbspg_c2};

/// Constants appearing in the convergence bounds for a step `η` and
/// smoothness `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub l: f64,
    pub eta: f64,
    /// `(2c(1−2c)+2)/(c(1−2c))` with `c = ηL`.
    pub c1: f64,
    /// `(6−4c)/(1−2c)`.
    pub c2: f64,
    /// `4L² + 1/η² + 2L/η`.
    pub gamma: f64,
    /// `(1−3ηL)/(2η)`.
    pub theta: f64,
    /// `4(η²L²+1)/(η(1−ηL))`.
    pub pgd_factor: f64,
}

impl BoundConstants {
    pub fn new(l: f64, eta: f64) -> Result<Self, SolverError> {
        if !(l > 0.0 && l.is_finite() && eta > 0.0 && eta.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("need L > 0 and eta > 0, got {l}, {eta}")));
        }
        let c = eta * l;
        Ok(BoundConstants {
            l,
            eta,
            c1: mbspg_c1(c),
            c2: mbspg_c2(c),
            gamma: 4.0 * l * l + 1.0 / (eta * eta) + 2.0 * l / eta,
            theta: (1.0 - 3.0 * eta * l) / (2.0 * eta),
            pgd_factor: 4.0 * (eta * eta * l * l + 1.0) / (eta * (1.0 - eta * l)),
        })
    }

    pub fn from_c(l: f64, c: f64) -> Result<Self, SolverError> {
        Self::new(l, c / l)
    }

    pub fn c(&self) -> f64 {
        self.eta * self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Deterministic proximal gradient.
    Deterministic,
    /// Mini-batch bound `c₁·V + c₂Δ/(ηT)`, where `V` is the averaged
    /// estimator error (or `σ²/m` for a fixed batch `m`).
    MiniBatch,
    /// Mini-batch bound with `m_t = b(t+1)`.
    IncreasingBatch,
    RecursiveOnline,
    RecursiveFiniteSum,
    IncreasingRecursiveOnline,
    IncreasingRecursiveFiniteSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    pub horizon: usize,
    /// `m` for fixed mini-batches, `|S₁|` for online SPGR.
    pub batch: usize,
    pub b: usize,
    pub sigma2: f64,
    pub delta_ub: f64,
    /// Measured `(1/T) Σ E‖g_t − ∇f(x_t)‖²`; overrides `σ²/m` in [`BoundKind::MiniBatch`].
    pub variance_term: Option<f64>,
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), SolverError> {
    if cond {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig(msg()))
    }
}

/// Evaluates the bound on `E[dist(0, ∂̂F(x_R))²]`.
pub fn theoretical_bound(kind: BoundKind, k: &BoundConstants, inp: &BoundInputs) -> Result<f64, SolverError> {
    require(inp.horizon >= 1, || "horizon must be >= 1".into())?;
    require(inp.delta_ub >= 0.0 && inp.sigma2 >= 0.0, || "Delta and sigma^2 must be >= 0".into())?;
    let t = inp.horizon as f64;
    let (eta, l, delta) = (k.eta, k.l, inp.delta_ub);
    let c = k.c();
    match kind {
        BoundKind::Deterministic => {
            require(c < 1.0, || format!("deterministic bound requires c in (0, 1), got {c}"))?;
            Ok(k.pgd_factor * delta / t)
        }
        BoundKind::MiniBatch | BoundKind::IncreasingBatch => {
            require(c < 0.5, || format!("mini-batch bound requires c in (0, 1/2), got {c}"))?;
            let tail = k.c2 * delta / (eta * t);
            let var = if kind == BoundKind::MiniBatch {
                match inp.variance_term {
                    Some(v) => v,
                    None => {
                        require(inp.batch >= 1, || "batch must be >= 1".into())?;
                        inp.sigma2 / inp.batch as f64
                    }
                }
            } else {
                require(inp.b >= 1, || "b must be >= 1".into())?;
                inp.sigma2 * (t.ln() + 1.0) / (inp.b as f64 * t)
            };
            Ok(k.c1 * var + tail)
        }
        _ => {
            require(k.theta > 0.0, || format!("recursive-estimator bound requires c in (0, 1/3), got {c}"))?;
            let (g, th) = (k.gamma, k.theta);
            let det = (2.0 * th + g * eta) * delta / (eta * th * t);
            match kind {
                BoundKind::RecursiveOnline => {
                    require(inp.batch >= 1, || "|S1| must be >= 1".into())?;
                    Ok(det + (g + 4.0 * th * l) * inp.sigma2 / (2.0 * th * l * inp.batch as f64))
                }
                BoundKind::IncreasingRecursiveOnline => {
                    require(inp.b >= 1, || "b must be >= 1".into())?;
                    let b = inp.b as f64;
                    let log_term = 0.5 * (2.0 * t / b).ln() + 1.0;
                    Ok(det + (4.0 * th * l + g) * inp.sigma2 * log_term / (2.0 * b * th * l * t))
                }
                _ => Ok(det),
            }
        }
    }
}

/// Smallest horizon `T ≤ max_t` with `theoretical_bound(T) ≤ ε²`.
pub fn min_horizon(
    kind: BoundKind,
    k: &BoundConstants,
    inp: &BoundInputs,
    eps: f64,
    max_t: usize,
) -> Result<usize, SolverError> {
    require(eps > 0.0, || "eps must be positive".into())?;
    let target = eps * eps;
    let at = |t: usize| theoretical_bound(kind, k, &BoundInputs { horizon: t, ..*inp });
    if at(max_t)? > target {
        return Err(SolverError::InvalidConfig(format!(
            "accuracy {eps} not reachable within {max_t} iterations under the {kind:?} bound"
        )));
    }
    // every bound is non-increasing in T
    let (mut lo, mut hi) = (1usize, max_t);
    if at(1)? <= target {
        return Ok(1);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
