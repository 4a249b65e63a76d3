//! Smooth even cutoff used to extend small-divisor inverses to all parameters.

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// `χ(ξ) = S(3|ξ| − 1)`: zero on `|ξ| ≤ 1/3`, one on `|ξ| ≥ 2/3`, strictly
/// increasing in `|ξ|` in between.
pub fn cutoff_chi(xi: f64) -> f64 {
    smooth_step(3.0 * xi.abs() - 1.0)
}
