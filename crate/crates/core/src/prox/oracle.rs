//! Brute-force reference for scalar proximal problems.

/// `(1/(2η))(y − x)² + r(y)`.
pub fn objective_1d(x: f64, eta: f64, r: impl Fn(f64) -> f64, y: f64) -> f64 {
    (y - x) * (y - x) / (2.0 * eta) + r(y)
}

/// Grid-search minimizer of [`objective_1d`] on `[lo, hi]`.
///
/// Evaluates `n_grid` uniform points plus the origin (where sparsity
/// penalties jump), then runs one golden-section pass on the two grid cells
/// around the best point. The refined point replaces the grid point only if
/// it is strictly better, so discontinuous penalties are handled too.
///
/// # Panics
/// If `lo >= hi`, `n_grid < 1000` or `eta <= 0`.
pub fn prox_oracle_1d(
    x: f64,
    eta: f64,
    r: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n_grid: usize,
) -> f64 {
    assert!(lo < hi, "oracle interval is empty");
    assert!(n_grid >= 1000, "oracle grid too coarse");
    assert!(eta > 0.0, "oracle step must be positive");
    let obj = |y: f64| objective_1d(x, eta, &r, y);
    let h = (hi - lo) / (n_grid - 1) as f64;

    let mut best = lo;
    let mut best_val = obj(lo);
    for i in 1..n_grid {
        let y = if i + 1 == n_grid { hi } else { lo + h * i as f64 };
        let v = obj(y);
        if v < best_val {
            best = y;
            best_val = v;
        }
    }
    if lo < 0.0 && 0.0 < hi {
        let v = obj(0.0);
        if v <= best_val {
            best = 0.0;
            best_val = v;
        }
    }

    // golden-section on [best − h, best + h]
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj(d);
        }
    }
    let refined = 0.5 * (a + b);
    if obj(refined) < best_val {
        refined
    } else {
        best
    }
}
