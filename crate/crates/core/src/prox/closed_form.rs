//! Scalar closed forms. Each `*_scalar(x, mu)` minimizes
//! `½(y − x)² + mu·φ(y)` where `mu = η·λ`.

use super::QuantGrid;

/// Hard thresholding: keeps `x` iff `x² > 2·mu`. The tie goes to 0.
pub fn prox_hard_scalar(x: f64, mu: f64) -> f64 {
    if x * x > 2.0 * mu {
        x
    } else {
        0.0
    }
}

/// Soft thresholding.
pub fn prox_soft_scalar(x: f64, mu: f64) -> f64 {
    x.signum() * (x.abs() - mu).max(0.0)
}

fn objective(x: f64, y: f64, mu: f64, phi: impl Fn(f64) -> f64) -> f64 {
    0.5 * (y - x) * (y - x) + mu * phi(y.abs())
}

/// Keeps the nonzero stationary point `y` only when it strictly beats 0.
fn pick(x: f64, y: f64, mu: f64, phi: impl Fn(f64) -> f64 + Copy) -> f64 {
    let y = x.signum() * y;
    if objective(x, y, mu, phi) < objective(x, 0.0, mu, phi) {
        y
    } else {
        0.0
    }
}

/// Half thresholding for `mu·|y|^{1/2}`.
///
/// With `y = z²` the nonzero stationary points solve `z³ − |x|·z + mu/2 = 0`;
/// the local minimizer is the largest root, taken from the trigonometric
/// form of the depressed cubic.
pub fn prox_half_scalar(x: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        return x;
    }
    let a = x.abs();
    if a == 0.0 {
        return 0.0;
    }
    let c = 0.5 * mu;
    // three real roots iff 4a³ ≥ 27c²
    if 4.0 * a * a * a < 27.0 * c * c {
        return 0.0;
    }
    let arg = (-(1.5 * c / a) * (3.0 / a).sqrt()).clamp(-1.0, 1.0);
    let z = 2.0 * (a / 3.0).sqrt() * (arg.acos() / 3.0).cos();
    pick(x, z * z, mu, f64::sqrt)
}

/// Two-thirds thresholding for `mu·|y|^{2/3}`.
///
/// With `y = z³` the nonzero stationary points solve
/// `z⁴ − |x|·z + 2mu/3 = 0`. Ferrari's resolvent `s³ − c·s − |x|²/8 = 0`
/// has a unique positive root `s`; with `A = √(2s)` the local minimizer is
/// `z = (A + √(2|x|/A − A²))/2`.
pub fn prox_two_thirds_scalar(x: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        return x;
    }
    let a = x.abs();
    if a == 0.0 {
        return 0.0;
    }
    let c = 2.0 * mu / 3.0;
    let scale = 2.0 * (c / 3.0).sqrt();
    let w = (3.0 * a * a / (16.0 * c)) * (3.0 / c).sqrt();
    let s = if w >= 1.0 {
        scale * (w.acosh() / 3.0).cosh()
    } else {
        scale * (w.acos() / 3.0).cos()
    };
    let big_a = (2.0 * s).sqrt();
    let disc = 2.0 * a / big_a - big_a * big_a;
    if !(disc >= 0.0) {
        return 0.0;
    }
    let z = 0.5 * (big_a + disc.sqrt());
    pick(x, z * z * z, mu, |v| v.powf(2.0 / 3.0))
}

/// Prox of `(λ/2)·dist(y, Ω)²` with step `eta`.
///
/// The 1-D objective is a quadratic on each Voronoi cell of Ω, minimized at
/// `(x + ηλq)/(1 + ηλ)` clamped into the cell of `q`. That point lies
/// between `x` and `q`, so only the cells of the two grid points bracketing
/// `x` and their shared boundary are candidates.
pub fn prox_quant_scalar(x: f64, eta: f64, lambda: f64, grid: &QuantGrid) -> f64 {
    if lambda == 0.0 {
        return x;
    }
    let g = grid.points();
    let el = eta * lambda;
    let cell = |j: usize| {
        let lo = if j == 0 { f64::NEG_INFINITY } else { 0.5 * (g[j - 1] + g[j]) };
        let hi = if j + 1 == g.len() { f64::INFINITY } else { 0.5 * (g[j] + g[j + 1]) };
        (lo, hi)
    };
    let obj = |y: f64| (y - x) * (y - x) / (2.0 * eta) + 0.5 * lambda * grid.dist_sq(y);

    let i = g.partition_point(|&p| p <= x);
    let mut adjacent = [None, None];
    if i > 0 {
        adjacent[0] = Some(i - 1);
    }
    if i < g.len() {
        adjacent[1] = Some(i);
    }
    let mut best = x;
    let mut best_val = f64::INFINITY;
    let mut consider = |y: f64| {
        let v = obj(y);
        if v < best_val {
            best_val = v;
            best = y;
        }
    };
    for j in adjacent.into_iter().flatten() {
        let (lo, hi) = cell(j);
        consider(((x + el * g[j]) / (1.0 + el)).clamp(lo, hi));
    }
    if let [Some(a), Some(b)] = adjacent {
        consider(0.5 * (g[a] + g[b]));
    }
    best
}
