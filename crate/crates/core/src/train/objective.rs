use crate::constraint::{empirical_constraint, ConstraintSpec, ScoredBatch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{logistic_loss, ModelParams};
use crate::surrogate::SurrogateSpec;

use super::TrajectoryRow;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    /// `loss + lambda * constraint_surrogate`.
    pub total: f64,
    pub loss: f64,
    pub constraint_surrogate: f64,
    pub constraint_indicator: f64,
    /// Gradient of `total` with respect to the model parameters.
    pub grad: Vec<f64>,
}

impl ObjectiveEval {
    pub(crate) fn row(&self, epoch: usize, lambda: f64) -> TrajectoryRow {
        TrajectoryRow {
            epoch,
            loss: self.loss,
            penalty: lambda * self.constraint_surrogate,
            constraint_indicator: self.constraint_indicator,
            constraint_surrogate: self.constraint_surrogate,
        }
    }
}

/// Penalized objective `L_n(f) + lambda * phi_n(f)` and its exact gradient.
/// `adv` holds the adversarial neighbours (one per row) for UIF.
pub fn penalized_objective(
    model: &ModelParams,
    data: &Dataset,
    adv: Option<&Matrix>,
    lambda: f64,
    surrogate: &SurrogateSpec,
    constraint: &ConstraintSpec,
) -> Result<ObjectiveEval> {
    let scores = model.forward(&data.x)?;
    let (loss, dloss) = logistic_loss(&scores, &data.y)?;
    let adv_scores = adv.map(|v| model.forward(v)).transpose()?;
    let mut batch = ScoredBatch::new(&scores, &data.y, &data.z)?;
    if let Some(a) = &adv_scores {
        batch = batch.with_adversarial(a)?;
    }
    let ce = empirical_constraint(&batch, constraint, surrogate)?;
    let indicator = empirical_constraint(&batch, constraint, &SurrogateSpec::indicator())?.value;

    let upstream: Vec<f64> = dloss
        .iter()
        .zip(&ce.grad)
        .map(|(l, c)| l + lambda * c)
        .collect();
    let mut grad = model.backward(&data.x, &upstream)?;
    if let Some(ag) = &ce.adv_grad {
        let v = adv.ok_or(Error::MissingAdversarialScores)?;
        if lambda != 0.0 {
            let scaled: Vec<f64> = ag.iter().map(|g| lambda * g).collect();
            for (g, a) in grad.iter_mut().zip(model.backward(v, &scaled)?) {
                *g += a;
            }
        }
    }
    Ok(ObjectiveEval {
        total: loss + lambda * ce.value,
        loss,
        constraint_surrogate: ce.value,
        constraint_indicator: indicator,
        grad,
    })
}
