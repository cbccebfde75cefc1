//! Proximal operators of the non-convex penalties.
//!
//! `prox_{ηr}[x] = argmin_y (1/(2η))‖y − x‖² + r(y)`. For the non-convex
//! kinds the argmin may be a set; every operator here returns one fixed,
//! documented element of it.

mod closed_form;
pub mod oracle;

use std::fmt;

use thiserror::Error;

pub use closed_form::{
    prox_half_scalar, prox_hard_scalar, prox_quant_scalar, prox_soft_scalar,
    prox_two_thirds_scalar,
};
pub use oracle::{objective_1d, prox_oracle_1d};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("non-finite input at coordinate {index}")]
    NonFinite { index: usize },
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid regularizer parameter: {0}")]
    InvalidParameter(String),
    #[error("zero-dimensional input")]
    EmptyInput,
    #[error("input dimension {got} does not match output buffer {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Objective value that may be `+∞` (indicator penalties).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(v) if v.is_finite())
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInfinity => None,
        }
    }

    /// `self + v` for a finite `v`.
    pub fn plus(self, v: f64) -> ExtReal {
        match self {
            ExtReal::Finite(a) => ExtReal::Finite(a + v),
            ExtReal::PosInfinity => ExtReal::PosInfinity,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInfinity => f.write_str("inf"),
        }
    }
}

/// Quantization set Ω: finite, strictly increasing, nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid(Vec<f64>);

impl QuantGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, ProxError> {
        if points.is_empty() {
            return Err(ProxError::InvalidParameter("quantization grid is empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(ProxError::InvalidParameter("quantization grid has a non-finite point".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProxError::InvalidParameter(
                "quantization grid must be strictly increasing without duplicates".into(),
            ));
        }
        Ok(QuantGrid(points))
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    /// Nearest grid point; a point equidistant from two neighbours maps to
    /// the larger one.
    pub fn nearest(&self, x: f64) -> f64 {
        let g = &self.0;
        let i = g.partition_point(|&p| p <= x);
        if i == 0 {
            return g[0];
        }
        if i == g.len() {
            return g[g.len() - 1];
        }
        let (lo, hi) = (g[i - 1], g[i]);
        if x - lo < hi - x {
            lo
        } else {
            hi
        }
    }

    /// Coordinatewise projection `P_Ω(x)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.nearest(v)).collect()
    }

    /// Squared distance from `y` to the grid.
    pub fn dist_sq(&self, y: f64) -> f64 {
        let d = y - self.nearest(y);
        d * d
    }
}

/// Discriminant of [`Regularizer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    L0,
    LHalf,
    LTwoThirds,
    L0Ball,
    Quantization,
    L1,
}

impl RegKind {
    pub const ALL: [RegKind; 6] = [
        RegKind::L0,
        RegKind::LHalf,
        RegKind::LTwoThirds,
        RegKind::L0Ball,
        RegKind::Quantization,
        RegKind::L1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegKind::L0 => "l0",
            RegKind::LHalf => "l_half",
            RegKind::LTwoThirds => "l_two_thirds",
            RegKind::L0Ball => "l0_ball",
            RegKind::Quantization => "quantization",
            RegKind::L1 => "l1",
        }
    }
}

/// The non-smooth term `r(x)` of the objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `λ‖x‖₀`
    L0 { lambda: f64 },
    /// `λ Σ |x_i|^{1/2}`
    LHalf { lambda: f64 },
    /// `λ Σ |x_i|^{2/3}`
    LTwoThirds { lambda: f64 },
    /// Indicator of `{‖x‖₀ ≤ k}`.
    L0Ball { k: usize },
    /// `(λ/2)‖x − P_Ω(x)‖²`
    Quantization { lambda: f64, grid: QuantGrid },
    /// `λ‖x‖₁`, a convex reference point.
    L1 { lambda: f64 },
}

fn check_lambda(lambda: f64) -> Result<f64, ProxError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(lambda)
    } else {
        Err(ProxError::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")))
    }
}

fn check_input(x: &[f64]) -> Result<(), ProxError> {
    if x.is_empty() {
        return Err(ProxError::EmptyInput);
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ProxError::NonFinite { index }),
        None => Ok(()),
    }
}

impl Regularizer {
    pub fn l0(lambda: f64) -> Result<Self, ProxError> {
        Ok(Regularizer::L0 { lambda: check_lambda(lambda)? })
    }

    pub fn l_half(lambda: f64) -> Result<Self, ProxError> {
        Ok(Regularizer::LHalf { lambda: check_lambda(lambda)? })
    }

    pub fn l_two_thirds(lambda: f64) -> Result<Self, ProxError> {
        Ok(Regularizer::LTwoThirds { lambda: check_lambda(lambda)? })
    }

    pub fn l0_ball(k: usize) -> Result<Self, ProxError> {
        if k == 0 {
            return Err(ProxError::InvalidParameter("l0-ball radius must be >= 1".into()));
        }
        Ok(Regularizer::L0Ball { k })
    }

    pub fn quantization(lambda: f64, grid: Vec<f64>) -> Result<Self, ProxError> {
        Ok(Regularizer::Quantization { lambda: check_lambda(lambda)?, grid: QuantGrid::new(grid)? })
    }

    pub fn l1(lambda: f64) -> Result<Self, ProxError> {
        Ok(Regularizer::L1 { lambda: check_lambda(lambda)? })
    }

    pub fn kind(&self) -> RegKind {
        match self {
            Regularizer::L0 { .. } => RegKind::L0,
            Regularizer::LHalf { .. } => RegKind::LHalf,
            Regularizer::LTwoThirds { .. } => RegKind::LTwoThirds,
            Regularizer::L0Ball { .. } => RegKind::L0Ball,
            Regularizer::Quantization { .. } => RegKind::Quantization,
            Regularizer::L1 { .. } => RegKind::L1,
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, Regularizer::L0Ball { .. })
    }

    /// One-coordinate penalty. For `L0Ball` a scalar is always feasible
    /// (`k ≥ 1`), so the value is 0.
    pub fn scalar_value(&self, y: f64) -> f64 {
        match self {
            Regularizer::L0 { lambda } => {
                if y != 0.0 {
                    *lambda
                } else {
                    0.0
                }
            }
            Regularizer::LHalf { lambda } => lambda * y.abs().sqrt(),
            Regularizer::LTwoThirds { lambda } => lambda * y.abs().powf(2.0 / 3.0),
            Regularizer::L0Ball { .. } => 0.0,
            Regularizer::Quantization { lambda, grid } => 0.5 * lambda * grid.dist_sq(y),
            Regularizer::L1 { lambda } => lambda * y.abs(),
        }
    }

    /// `r(x)`.
    pub fn value(&self, x: &[f64]) -> Result<ExtReal, ProxError> {
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(ProxError::NonFinite { index });
        }
        Ok(match self {
            Regularizer::L0Ball { k } => {
                if nnz(x) <= *k {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::PosInfinity
                }
            }
            _ => ExtReal::Finite(x.iter().map(|&v| self.scalar_value(v)).sum()),
        })
    }

    /// Scalar prox of a separable kind. `L0Ball` returns `x` (the 1-D
    /// projection with `k ≥ 1` is the identity).
    pub fn prox_scalar(&self, x: f64, eta: f64) -> f64 {
        match self {
            Regularizer::L0 { lambda } => prox_hard_scalar(x, eta * lambda),
            Regularizer::LHalf { lambda } => prox_half_scalar(x, eta * lambda),
            Regularizer::LTwoThirds { lambda } => prox_two_thirds_scalar(x, eta * lambda),
            Regularizer::L0Ball { .. } => x,
            Regularizer::Quantization { lambda, grid } => prox_quant_scalar(x, eta, *lambda, grid),
            Regularizer::L1 { lambda } => prox_soft_scalar(x, eta * lambda),
        }
    }

    /// `prox_{ηr}[x]` written into `out`.
    pub fn prox_into(&self, x: &[f64], eta: f64, out: &mut [f64]) -> Result<(), ProxError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ProxError::NonPositiveStep(eta));
        }
        check_input(x)?;
        if out.len() != x.len() {
            return Err(ProxError::DimensionMismatch { expected: out.len(), got: x.len() });
        }
        match self {
            Regularizer::L0Ball { k } => project_l0_ball_into(x, *k, out),
            _ => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = self.prox_scalar(v, eta);
                }
            }
        }
        Ok(())
    }

    /// `prox_{ηr}[x]`.
    pub fn prox(&self, x: &[f64], eta: f64) -> Result<Vec<f64>, ProxError> {
        let mut out = vec![0.0; x.len()];
        self.prox_into(x, eta, &mut out)?;
        Ok(out)
    }
}

pub fn nnz(x: &[f64]) -> usize {
    x.iter().filter(|&&v| v != 0.0).count()
}

/// Keeps the `k` largest-magnitude coordinates. Among equal magnitudes at
/// the cut, lower indices are kept.
pub fn project_l0_ball(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    project_l0_ball_into(x, k, &mut out);
    out
}

fn project_l0_ball_into(x: &[f64], k: usize, out: &mut [f64]) {
    out.fill(0.0);
    if k >= x.len() {
        out.copy_from_slice(x);
        return;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    // stable: equal magnitudes keep ascending index order
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    for &i in &order[..k] {
        out[i] = x[i];
    }
}
