//! Randomized self-checks: closed-form proxes against the brute-force
//! oracle, analytic gradients against central differences.

use std::fmt::Write as _;

use rand::Rng;

use crate::model::{Dataset, Objective, SmoothLoss};
use crate::prox::{nnz, objective_1d, prox_oracle_1d, ProxError, RegKind, Regularizer};
use crate::rng::{self, SpgRng};

/// Per-kind outcome of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub max_violation: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.failures == 0)
    }

    pub fn row(&self, name: &str) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<14} {:>6} {:>8} {:>14}  {}\n", "case", "n", "failed", "max_violation", "status");
        for r in &self.rows {
            let status = if r.failures == 0 { "PASS" } else { "FAIL" };
            let _ = write!(s, "{:<14} {:>6} {:>8} {:>14.3e}  {}", r.name, r.cases, r.failures, r.max_violation, status);
            if !r.note.is_empty() {
                let _ = write!(s, "  ({})", r.note);
            }
            s.push('\n');
        }
        s
    }
}

/// Scalar prox under test: `(regularizer, x, η) → y`.
pub type ScalarProx<'a> = &'a dyn Fn(&Regularizer, f64, f64) -> f64;

/// Slack allowed between the closed form and the oracle objective.
pub const PROX_TOLERANCE: f64 = 1e-8;
/// Relative-error limit for the gradient suite.
pub const GRAD_TOLERANCE: f64 = 1e-5;
/// Finite-difference step for the gradient suite.
pub const FD_STEP: f64 = 1e-6;

const ORACLE_GRID: usize = 10_001;
const BALL_MAX_DIM: usize = 6;

fn log_uniform(rng: &mut SpgRng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_grid(rng: &mut SpgRng) -> Vec<f64> {
    loop {
        let m = rng.random_range(2..=4);
        let mut g: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        g.sort_by(f64::total_cmp);
        if g.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            return g;
        }
    }
}

fn random_regularizer(kind: RegKind, rng: &mut SpgRng) -> Regularizer {
    let lambda = log_uniform(rng, 1e-4, 10.0);
    match kind {
        RegKind::L0 => Regularizer::l0(lambda),
        RegKind::LHalf => Regularizer::l_half(lambda),
        RegKind::LTwoThirds => Regularizer::l_two_thirds(lambda),
        RegKind::L1 => Regularizer::l1(lambda),
        RegKind::Quantization => Regularizer::quantization(lambda, random_grid(rng)),
        RegKind::L0Ball => Regularizer::l0_ball(1),
    }
    .expect("valid random parameters")
}

fn zero_dim_guard(r: &Regularizer) -> Result<(), String> {
    match r.prox(&[], 1.0) {
        Err(ProxError::EmptyInput) => Ok(()),
        other => Err(format!("zero-dimension input not rejected: {other:?}")),
    }
}

fn separable_row(kind: RegKind, cases: usize, rng: &mut SpgRng, prox: ScalarProx<'_>) -> SuiteRow {
    let mut failures = 0;
    let mut max_violation: f64 = 0.0;
    for _ in 0..cases {
        let reg = random_regularizer(kind, rng);
        let x: f64 = rng.random_range(-10.0..10.0);
        let eta = log_uniform(rng, 1e-3, 10.0);
        let r = |y: f64| reg.scalar_value(y);
        let (mut lo, mut hi) = (x.min(0.0) - 1.0, x.max(0.0) + 1.0);
        if let Regularizer::Quantization { grid, .. } = &reg {
            lo = lo.min(grid.points()[0] - 1.0);
            hi = hi.max(grid.points()[grid.points().len() - 1] + 1.0);
        }
        let y = prox(&reg, x, eta);
        let ours = objective_1d(x, eta, r, y);
        let oracle = objective_1d(x, eta, r, prox_oracle_1d(x, eta, r, lo, hi, ORACLE_GRID));
        let violation = (ours - oracle).max(ours - r(x));
        if !ours.is_finite() || violation > PROX_TOLERANCE {
            failures += 1;
        }
        max_violation = max_violation.max(violation);
    }
    SuiteRow { name: kind.name().into(), cases, failures, max_violation, note: String::new() }
}

fn l0_ball_row(cases: usize, rng: &mut SpgRng) -> SuiteRow {
    let mut failures = 0;
    let mut max_violation: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1..=BALL_MAX_DIM);
        let k = rng.random_range(1..=d);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let eta = log_uniform(rng, 1e-3, 10.0);
        let y = Regularizer::l0_ball(k).expect("k >= 1").prox(&x, eta).expect("finite input");
        let dist = |y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * eta);
        // brute force over all supports of size k
        let mut brute = f64::INFINITY;
        for mask in 0u32..(1 << d) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let cand: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { 0.0 }).collect();
            brute = brute.min(dist(&cand));
        }
        let violation = dist(&y) - brute;
        if nnz(&y) > k || violation > PROX_TOLERANCE {
            failures += 1;
        }
        max_violation = max_violation.max(violation);
    }
    SuiteRow { name: RegKind::L0Ball.name().into(), cases, failures, max_violation, note: String::new() }
}

/// Oracle-agreement suite over every regularizer kind, with `prox`
/// supplying the scalar operator under test.
pub fn prox_suite_with(cases: usize, seed: u64, prox: ScalarProx<'_>) -> SuiteReport {
    let mut rng = rng::stream(seed, rng::STREAM_PROBE);
    let mut rows = Vec::new();
    for kind in RegKind::ALL {
        let mut row = match kind {
            RegKind::L0Ball => l0_ball_row(cases, &mut rng),
            _ => separable_row(kind, cases, &mut rng, prox),
        };
        let probe = random_regularizer(kind, &mut rng);
        match zero_dim_guard(&probe) {
            Ok(()) => row.note = "empty input rejected".into(),
            Err(e) => {
                row.failures += 1;
                row.note = e;
            }
        }
        rows.push(row);
    }
    SuiteReport { rows }
}

pub fn prox_suite(cases: usize, seed: u64) -> SuiteReport {
    prox_suite_with(cases, seed, &|r, x, eta| r.prox_scalar(x, eta))
}

fn random_instance(loss: SmoothLoss, rng: &mut SpgRng) -> Dataset {
    let n = rng.random_range(1..=8);
    let d = rng.random_range(1..=6);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        for j in 0..d {
            if rng.random_bool(0.8) {
                row.push((j, rng.random_range(-2.0..2.0)));
            }
        }
        rows.push(row);
    }
    let labels = (0..n)
        .map(|_| match loss {
            SmoothLoss::NllsSigmoid => f64::from(u8::from(rng.random_bool(0.5))),
            SmoothLoss::TruncatedLs { .. } => rng.random_range(-3.0..3.0),
        })
        .collect();
    Dataset::from_rows(rows, labels, d).expect("valid random instance")
}

/// Analytic vs central-difference gradients on random small instances.
pub fn grad_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = rng::stream(seed, rng::STREAM_PROBE);
    let mut rows = Vec::new();
    for name in ["nlls", "tls"] {
        let mut failures = 0;
        let mut max_err: f64 = 0.0;
        for _ in 0..cases {
            let loss = match name {
                "nlls" => SmoothLoss::NllsSigmoid,
                _ => SmoothLoss::TruncatedLs { alpha: rng.random_range(0.5..20.0) },
            };
            let ds = random_instance(loss, &mut rng);
            let obj = Objective::new(loss, Regularizer::l0(0.0).expect("lambda 0"), &ds).expect("valid objective");
            let x: Vec<f64> = (0..ds.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = obj.full_gradient(&x);
            let fd = obj.finite_diff_grad(&x, FD_STEP);
            let diff = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            let err = diff / scale;
            if !(err < GRAD_TOLERANCE) {
                failures += 1;
            }
            max_err = max_err.max(err);
        }
        rows.push(SuiteRow { name: name.into(), cases, failures, max_violation: max_err, note: String::new() });
    }
    SuiteReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::prox_hard_scalar;

    #[test]
    fn pristine_operators_pass() {
        let report = prox_suite(200, 1);
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.rows.len(), 6);
        assert!(report.rows.iter().all(|r| r.note == "empty input rejected"));
        assert!(grad_suite(50, 1).passed());
    }

    #[test]
    fn perturbed_hard_threshold_is_caught() {
        // keep x only when x² > 4ηλ instead of 2ηλ
        let mutant = |r: &Regularizer, x: f64, eta: f64| match r {
            Regularizer::L0 { lambda } => prox_hard_scalar(x, 2.0 * eta * lambda),
            _ => r.prox_scalar(x, eta),
        };
        let report = prox_suite_with(1000, 1, &mutant);
        let row = report.row("l0").unwrap();
        assert!(row.failures > 0 && row.max_violation > PROX_TOLERANCE);
        assert!(report.rows.iter().filter(|r| r.name != "l0").all(|r| r.failures == 0));
    }
}
