use super::{gap_curve, GapCurve, ParamGrid};
use crate::error::{Error, Result};
use crate::normal::{cdf, inverse_mills};

/// Nodes with `|beta| < BETA_FLOOR` are left out of the analytic grid.
pub const BETA_FLOOR: f64 = 0.05;

/// Closed-form DI and hinge DI of `f(x) = beta0 + beta * x` when
/// `X | Z = z ~ N(2z - 1, 1)`.
///
/// `DI = |Phi(-beta0/beta + 1) - Phi(-beta0/beta - 1)|`, and the hinge value
/// is `|-2 beta + m(a1) - m(a2)|` with `m` the inverse Mills ratio,
/// `a1 = -(beta0 - beta + 1)/beta`, `a2 = -(beta0 + beta + 1)/beta`.
pub fn analytic_1d_gaussian(beta0: f64, beta: f64) -> Result<(f64, f64)> {
    if beta == 0.0 || !beta.is_finite() || !beta0.is_finite() {
        return Err(Error::DegenerateSlope);
    }
    let c = beta0 / beta;
    let di = (cdf(-c + 1.0) - cdf(-c - 1.0)).abs();
    let a1 = -(beta0 - beta + 1.0) / beta;
    let a2 = -(beta0 + beta + 1.0) / beta;
    let hinge = (-2.0 * beta + inverse_mills(a1) - inverse_mills(a2)).abs();
    Ok((di, hinge))
}

/// Hinge gap curve from the closed forms over `(beta0, beta) in [-1, 1]^2`
/// (axis 0 is `beta0`), excluding `|beta| < BETA_FLOOR`.
pub fn analytic_gap_curve(res: usize, alphas: &[f64], n_alpha_prime: usize) -> Result<GapCurve> {
    let grid = ParamGrid::new([-1.0, -1.0], [1.0, 1.0], [res, res])?;
    let mut di = Vec::with_capacity(grid.len());
    let mut hinge = Vec::with_capacity(grid.len());
    for [b0, b] in grid.nodes() {
        if b.abs() < BETA_FLOOR {
            di.push(f64::INFINITY);
            hinge.push(f64::INFINITY);
        } else {
            let (d, h) = analytic_1d_gaussian(b0, b)?;
            di.push(d);
            hinge.push(h);
        }
    }
    gap_curve(
        &grid,
        &di,
        &[("hinge".into(), hinge)],
        alphas,
        n_alpha_prime,
    )
}
