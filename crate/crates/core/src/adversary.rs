//! Worst-case neighbours for uniform individual fairness.
//!
//! The maximiser of `|f(v) - f(x)|` over the L2 ball of radius `epsilon`
//! around `x` is approximated by power iteration on the perturbed branch:
//! starting from a random unit direction `u`, repeat
//! `u <- normalize(grad_u |f(x + xi u) - f(x)|)`. For a linear model one
//! step recovers `+-w/|w|` exactly; near a stationary point the iteration
//! tracks the dominant Hessian eigenvector. Only continuous coordinates are
//! perturbed. Both `x + eps u` and `x - eps u` are evaluated and the larger
//! discrepancy wins.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ScoreModel;
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryConfig {
    /// Radius of the L2 ball on the perturbable coordinates.
    pub epsilon: f64,
    /// Finite-difference probe scale; `None` means `1e-6 * sqrt(d)`.
    pub xi: Option<f64>,
    pub power_iters: usize,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            xi: None,
            power_iters: 1,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidAdversary(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0 && xi.is_finite()) {
                return Err(Error::InvalidAdversary(format!("xi must be > 0, got {xi}")));
            }
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidAdversary("power_iters must be >= 1".into()));
        }
        Ok(())
    }

    fn xi_for(&self, d: usize) -> f64 {
        self.xi.unwrap_or(1e-6 * (d as f64).sqrt())
    }
}

fn normalize_masked(u: &mut [f64], mask: &[bool]) -> bool {
    let n: f64 = u
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return false;
    }
    for (v, &m) in u.iter_mut().zip(mask) {
        *v = if m { *v / n } else { 0.0 };
    }
    true
}

fn shifted(x: &[f64], u: &[f64], step: f64) -> Vec<f64> {
    x.iter().zip(u).map(|(a, b)| a + step * b).collect()
}

/// Random unit direction on the perturbable coordinates.
pub fn random_direction(mask: &[bool], rng: &mut Rng) -> Result<Vec<f64>> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::NoPerturbableCoordinates);
    }
    loop {
        let mut u: Vec<f64> = mask
            .iter()
            .map(|&m| if m { StandardNormal.sample(rng) } else { 0.0 })
            .collect();
        if normalize_masked(&mut u, mask) {
            return Ok(u);
        }
    }
}

/// Refine a starting direction by power iteration.
pub fn refine_direction(
    model: &dyn ScoreModel,
    x: &[f64],
    mask: &[bool],
    mut u: Vec<f64>,
    config: &AdversaryConfig,
) -> Vec<f64> {
    let xi = config.xi_for(x.len());
    let fx = model.score(x);
    for _ in 0..config.power_iters {
        let probe = shifted(x, &u, xi);
        let diff = model.score(&probe) - fx;
        let sign = if diff < 0.0 { -1.0 } else { 1.0 };
        let mut g: Vec<f64> = model
            .input_grad(&probe)
            .into_iter()
            .map(|v| sign * v)
            .collect();
        if normalize_masked(&mut g, mask) {
            u = g;
        }
    }
    u
}

/// Approximate worst-case neighbour `v'` of `x`, with `|v' - x| = epsilon`
/// on the coordinates where `mask` is true.
pub fn adversarial_input(
    model: &dyn ScoreModel,
    x: &[f64],
    mask: &[bool],
    config: &AdversaryConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    config.validate()?;
    if mask.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "perturbation mask",
            expected: x.len(),
            actual: mask.len(),
        });
    }
    let u0 = random_direction(mask, rng)?;
    let u = refine_direction(model, x, mask, u0, config);
    let fx = model.score(x);
    let plus = shifted(x, &u, config.epsilon);
    let minus = shifted(x, &u, -config.epsilon);
    if (model.score(&minus) - fx).abs() > (model.score(&plus) - fx).abs() {
        Ok(minus)
    } else {
        Ok(plus)
    }
}

/// Adversarial neighbours for every row. Row `i` draws its start direction
/// from a substream keyed by `(seed, round, i)`, so results do not depend on
/// thread scheduling.
pub fn adversarial_batch(
    model: &dyn ScoreModel,
    x: &Matrix,
    mask: &[bool],
    config: &AdversaryConfig,
    seed: u64,
    round: u64,
) -> Result<Matrix> {
    config.validate()?;
    if mask.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "perturbation mask",
            expected: x.cols(),
            actual: mask.len(),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::NoPerturbableCoordinates);
    }
    let round_seed = derive_seed(seed, "adversary", round);
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::seed_from_u64(derive_seed(round_seed, "row", i as u64));
            adversarial_input(model, x.row(i), mask, config, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for r in rows {
        data.extend(r);
    }
    Matrix::from_vec(x.rows(), x.cols(), data)
}
