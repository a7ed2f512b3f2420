//! Standard normal density, distribution and inverse Mills ratio.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, computed without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `φ(x) / (1 - Φ(x))`.
///
/// For large `x` both numerator and denominator underflow, so the ratio is
/// evaluated from the continued fraction of `(1 - Φ(x)) / φ(x)`.
pub fn inverse_mills(x: f64) -> f64 {
    if x < 25.0 {
        return pdf(x) / sf(x);
    }
    // (1-Φ)/φ = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    tail
}
