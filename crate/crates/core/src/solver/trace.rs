use crate::prox::ExtReal;

/// One logged iterate. Record `t = 0` describes `x₀`; record `t ≥ 1`
/// describes `x_t` produced by the step that used `g_{t−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    /// Single-sample gradient evaluations spent by the optimizer so far
    /// (measurement gradients excluded).
    pub grad_evals: usize,
    pub objective: ExtReal,
    /// `‖∇f(x_t) − g_{t−1} − (x_t − x_{t−1})/η‖`, when measured.
    pub residual: Option<f64>,
    pub nnz: usize,
    /// Samples drawn for `g_{t−1}`; 0 for the initial record.
    pub batch: usize,
    pub anchor: bool,
    /// `‖g_{t−1} − ∇f(x_{t−1})‖²`, when tracked.
    pub grad_error_sq: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub x_final: Vec<f64>,
    /// Iterate at the pre-drawn output index `r_index`.
    pub x_r: Vec<f64>,
    pub r_index: usize,
    /// Iterate with the smallest measured residual (`x₀` if none measured).
    pub x_best: Vec<f64>,
    pub best_residual: Option<f64>,
    pub wall_ms: f64,
    pub anchor_iters: usize,
    pub inner_iters: usize,
    pub diverged: bool,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.t)
    }

    pub fn grad_evals(&self) -> usize {
        self.records.last().map_or(0, |r| r.grad_evals)
    }

    pub fn final_objective(&self) -> Option<ExtReal> {
        self.records.last().map(|r| r.objective)
    }

    /// Measured residuals as `(t, residual)`.
    pub fn residuals(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.records.iter().filter_map(|r| r.residual.map(|v| (r.t, v)))
    }

    /// Gradient evaluations at the first record whose residual is `≤ tau`.
    pub fn evals_to_residual(&self, tau: f64) -> Option<usize> {
        self.records.iter().find(|r| r.residual.is_some_and(|v| v <= tau)).map(|r| r.grad_evals)
    }

    /// Objective of the last record with `grad_evals ≤ budget`.
    pub fn objective_at_budget(&self, budget: usize) -> Option<ExtReal> {
        self.records.iter().take_while(|r| r.grad_evals <= budget).last().map(|r| r.objective)
    }

    /// Equality ignoring timing fields.
    pub fn same_path(&self, other: &RunTrace) -> bool {
        let strip = |r: &TraceRecord| TraceRecord { elapsed_ms: 0.0, ..r.clone() };
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| strip(a) == strip(b))
            && self.x_final == other.x_final
            && self.x_r == other.x_r
            && self.r_index == other.r_index
    }
}
