//! Smooth losses, gradient oracles and the composite objective `F = f + r`.

mod dataset;

pub use dataset::{Dataset, DatasetError, SparseRow, SparseVec};

use rand::Rng;
use thiserror::Error;

use crate::par::{self, Exec};
use crate::prox::{ExtReal, ProxError, Regularizer};

/// Upper bound on `|d²/dz² (b − σ(z))²|` over `z ∈ ℝ`, `b ∈ {0, 1}`.
///
/// The exact supremum is 0.154058… (attained at `|z| ≈ 0.4657`), rounded up
/// to three significant figures.
pub const NLLS_CURVATURE: f64 = 0.155;

/// `|ψ''(ρ)| ≤ 1` for `ψ(ρ) = (α/2)·log(1 + ρ²/α)`, attained at `ρ = 0`.
pub const TLS_CURVATURE: f64 = 1.0;

/// Floor applied to a degenerate smoothness estimate.
pub const MIN_LIPSCHITZ: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error("truncation alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("point has dimension {got}, dataset has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid constant: {0}")]
    InvalidConstant(String),
}

/// Smooth per-sample loss `f_i(x) = ℓ(a_iᵀx; label_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothLoss {
    /// `(b − σ(z))²` with the logistic sigmoid.
    NllsSigmoid,
    /// `(α/2)·log(1 + (y − z)²/α)`; the sample average reproduces
    /// `(1/2n) Σ α log(1 + ρ²/α)`.
    TruncatedLs { alpha: f64 },
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SmoothLoss {
    /// Default truncation `√(10n)`.
    pub fn truncated_ls_default(n: usize) -> Self {
        SmoothLoss::TruncatedLs { alpha: (10.0 * n as f64).sqrt() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            SmoothLoss::TruncatedLs { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(ModelError::InvalidAlpha(alpha))
            }
            _ => Ok(()),
        }
    }

    /// `(ℓ(z), ℓ'(z))` for margin `z = xᵀa`.
    pub fn link(&self, z: f64, label: f64) -> (f64, f64) {
        match *self {
            SmoothLoss::NllsSigmoid => {
                let s = sigmoid(z);
                let res = label - s;
                (res * res, -2.0 * res * s * (1.0 - s))
            }
            SmoothLoss::TruncatedLs { alpha } => {
                let rho = label - z;
                let u = rho * rho / alpha;
                (0.5 * alpha * u.ln_1p(), -rho / (1.0 + u))
            }
        }
    }

    /// Bound on `|ℓ''|`.
    pub fn curvature_bound(&self) -> f64 {
        match self {
            SmoothLoss::NllsSigmoid => NLLS_CURVATURE,
            SmoothLoss::TruncatedLs { .. } => TLS_CURVATURE,
        }
    }
}

/// `B_ℓ · max_i ‖a_i‖²`, a global Lipschitz constant of every `∇f_i` and
/// hence of `∇f`. Floored at [`MIN_LIPSCHITZ`] when all rows vanish.
pub fn estimate_smoothness(loss: &SmoothLoss, data: &Dataset) -> Result<f64, ModelError> {
    if data.n() == 0 {
        return Err(DatasetError::Empty.into());
    }
    let l = loss.curvature_bound() * data.max_row_norm_sq();
    if l < MIN_LIPSCHITZ {
        log::warn!("all feature rows are zero; smoothness constant floored at {MIN_LIPSCHITZ:e}");
        return Ok(MIN_LIPSCHITZ);
    }
    Ok(l)
}

/// `F(x) = (1/n) Σ f_i(x) + r(x)` together with the constants the theory
/// needs: `L` (gradient Lipschitz constant), `σ²` (gradient noise bound) and
/// `F(x₀)`, which upper-bounds `Δ` because every loss and penalty is ≥ 0.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub loss: SmoothLoss,
    pub reg: Regularizer,
    pub data: &'a Dataset,
    pub lipschitz: f64,
    pub sigma2: f64,
    pub f_x0: f64,
    pub exec: Exec,
}

impl<'a> Objective<'a> {
    /// Objective anchored at `x₀ = 0` with `L` from [`estimate_smoothness`]
    /// and `σ² = 0` until set.
    pub fn new(loss: SmoothLoss, reg: Regularizer, data: &'a Dataset) -> Result<Self, ModelError> {
        loss.validate()?;
        let lipschitz = estimate_smoothness(&loss, data)?;
        let mut obj = Objective { loss, reg, data, lipschitz, sigma2: 0.0, f_x0: 0.0, exec: Exec::default() };
        obj = obj.anchored_at(&vec![0.0; data.dim()])?;
        Ok(obj)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Result<Self, ModelError> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(ModelError::InvalidConstant(format!("L must be positive, got {l}")));
        }
        self.lipschitz = l;
        Ok(self)
    }

    pub fn with_sigma2(mut self, s: f64) -> Result<Self, ModelError> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(ModelError::InvalidConstant(format!("sigma^2 must be >= 0, got {s}")));
        }
        self.sigma2 = s;
        Ok(self)
    }

    /// Records `F(x₀)` for the given start point.
    pub fn anchored_at(mut self, x0: &[f64]) -> Result<Self, ModelError> {
        match self.full_objective(x0)? {
            ExtReal::Finite(v) => {
                self.f_x0 = v;
                Ok(self)
            }
            ExtReal::PosInfinity => {
                Err(ModelError::InvalidConstant("initial point is infeasible for the regularizer".into()))
            }
        }
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch { expected: self.dim(), got: x.len() })
        }
    }

    fn link_at(&self, x: &[f64], i: usize) -> (f64, f64) {
        let row = self.data.row(i);
        self.loss.link(row.dot(x), self.data.label(i))
    }

    /// `(f_i(x), ∇f_i(x))`; the gradient has the support of `a_i`.
    pub fn sample_loss_grad(&self, x: &[f64], i: usize) -> Result<(f64, SparseVec), ModelError> {
        self.check_dim(x)?;
        self.data.check_index(i)?;
        let (value, dz) = self.link_at(x, i);
        let row = self.data.row(i);
        let grad = SparseVec {
            indices: row.indices.to_vec(),
            values: row.values.iter().map(|v| dz * v).collect(),
        };
        Ok((value, grad))
    }

    /// `out += scale · ∇f_i(x)` without bounds checks on `i`.
    pub fn add_sample_grad(&self, x: &[f64], i: usize, scale: f64, out: &mut [f64]) {
        let (_, dz) = self.link_at(x, i);
        self.data.row(i).axpy(scale * dz, out);
    }

    /// Average gradient over `indices`, accumulated in the given order
    /// with the fixed chunked reduction. Duplicates count with multiplicity.
    pub fn batch_grad(&self, x: &[f64], indices: &[usize]) -> Vec<f64> {
        let m = indices.len();
        let mut g = par::chunked_sum(self.exec, m, self.dim(), |range, acc| {
            for &i in &indices[range] {
                self.add_sample_grad(x, i, 1.0, acc);
            }
        });
        if m > 0 {
            let inv = 1.0 / m as f64;
            g.iter_mut().for_each(|v| *v *= inv);
        }
        g
    }

    /// `∇f(x)`, accumulated in ascending sample order.
    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut g = par::chunked_sum(self.exec, n, self.dim(), |range, acc| {
            for i in range {
                self.add_sample_grad(x, i, 1.0, acc);
            }
        });
        let inv = 1.0 / n as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Smooth part `f(x)`.
    pub fn smooth_value(&self, x: &[f64]) -> f64 {
        par::chunked_scalar_sum(self.exec, self.n(), |i| self.link_at(x, i).0) / self.n() as f64
    }

    /// `F(x) = f(x) + r(x)`.
    pub fn full_objective(&self, x: &[f64]) -> Result<ExtReal, ModelError> {
        self.check_dim(x)?;
        let r = self.reg.value(x)?;
        Ok(r.plus(self.smooth_value(x)))
    }

    /// Central differences of the smooth part.
    pub fn finite_diff_grad(&self, x: &[f64], h: f64) -> Vec<f64> {
        assert!(h > 0.0, "finite-difference step must be positive");
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|j| {
                probe[j] = x[j] + h;
                let up = self.smooth_value(&probe);
                probe[j] = x[j] - h;
                let down = self.smooth_value(&probe);
                probe[j] = x[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// Exact `(1/n) Σ ‖∇f_i(x) − ∇f(x)‖²`.
    pub fn population_noise_variance(&self, x: &[f64]) -> f64 {
        let g = self.full_gradient(x);
        par::chunked_scalar_sum(self.exec, self.n(), |i| sample_deviation_sq(self, x, &g, i)) / self.n() as f64
    }

    /// `(1/(n_probe − 1)) Σ_j ‖∇f(x; ξ_j) − ∇f(x)‖²` over uniform draws.
    pub fn estimate_noise_variance<R: Rng + ?Sized>(&self, x: &[f64], n_probe: usize, rng: &mut R) -> f64 {
        assert!(n_probe >= 2, "need at least two probes");
        let g = self.full_gradient(x);
        let n = self.n();
        let draws: Vec<usize> = (0..n_probe).map(|_| rng.random_range(0..n)).collect();
        let total = par::chunked_scalar_sum(self.exec, n_probe, |j| sample_deviation_sq(self, x, &g, draws[j]));
        total / (n_probe - 1) as f64
    }
}

fn sample_deviation_sq(obj: &Objective<'_>, x: &[f64], g: &[f64], i: usize) -> f64 {
    let (_, dz) = obj.link_at(x, i);
    let row = obj.data.row(i);
    // ‖dz·a − g‖² = ‖g‖² + Σ_{j∈supp} ((dz a_j − g_j)² − g_j²)
    let mut acc: f64 = g.iter().map(|v| v * v).sum();
    for (&j, &v) in row.indices.iter().zip(row.values) {
        let d = dz * v - g[j];
        acc += d * d - g[j] * g[j];
    }
    acc.max(0.0)
}
