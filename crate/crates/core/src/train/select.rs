use serde::{Deserialize, Serialize};

use super::TrainResult;
use crate::adversary::AdversaryConfig;
use crate::constraint::ConstraintSpec;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{accuracy, indicator_constraint};

/// Validation performance of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// Percent.
    pub accuracy: f64,
    /// Indicator-based constraint value.
    pub constraint: f64,
    pub seed: u64,
}

pub fn score_candidates(
    candidates: &[TrainResult],
    validation: &Dataset,
    spec: &ConstraintSpec,
    adversary: &AdversaryConfig,
    seed: u64,
) -> Result<Vec<CandidateScore>> {
    candidates
        .iter()
        .map(|c| {
            Ok(CandidateScore {
                accuracy: accuracy(c.model(), validation)?,
                constraint: indicator_constraint(c.model(), validation, spec, adversary, seed)?,
                seed: c.seed,
            })
        })
        .collect()
}

/// Keep candidates whose accuracy lies within `band` points of the target
/// (or the single closest one if none does), then take the smallest
/// constraint value; ties go to higher accuracy, then lower seed.
pub fn select_index(scores: &[CandidateScore], target_accuracy: f64, band: f64) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let dist = |s: &CandidateScore| (s.accuracy - target_accuracy).abs();
    let mut pool: Vec<usize> = (0..scores.len())
        .filter(|&i| dist(&scores[i]) <= band)
        .collect();
    if pool.is_empty() {
        let closest = (0..scores.len())
            .min_by(|&a, &b| {
                dist(&scores[a])
                    .total_cmp(&dist(&scores[b]))
                    .then(a.cmp(&b))
            })
            .expect("non-empty");
        pool.push(closest);
    }
    Ok(pool
        .into_iter()
        .min_by(|&a, &b| {
            let (sa, sb) = (&scores[a], &scores[b]);
            sa.constraint
                .total_cmp(&sb.constraint)
                .then(sb.accuracy.total_cmp(&sa.accuracy))
                .then(sa.seed.cmp(&sb.seed))
        })
        .expect("non-empty pool"))
}

/// The candidate chosen by [`select_index`] on validation scores.
pub fn select_model<'a>(
    candidates: &'a [TrainResult],
    validation: &Dataset,
    spec: &ConstraintSpec,
    adversary: &AdversaryConfig,
    target_accuracy: f64,
    band: f64,
    seed: u64,
) -> Result<&'a TrainResult> {
    let scores = score_candidates(candidates, validation, spec, adversary, seed)?;
    Ok(&candidates[select_index(&scores, target_accuracy, band)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(accuracy: f64, constraint: f64, seed: u64) -> CandidateScore {
        CandidateScore {
            accuracy,
            constraint,
            seed,
        }
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(select_index(&[s(70.0, 0.3, 1)], 90.0, 1.0).unwrap(), 0);
        assert!(matches!(
            select_index(&[], 90.0, 1.0),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn fairness_tiebreak() {
        let c = [s(80.0, 0.05, 1), s(80.0, 0.02, 2)];
        assert_eq!(select_index(&c, 80.0, 1.0).unwrap(), 1);
    }

    #[test]
    fn band_then_accuracy_then_seed() {
        let c = [
            s(85.0, 0.0, 0),
            s(80.5, 0.01, 5),
            s(79.5, 0.01, 3),
            s(80.5, 0.01, 2),
        ];
        assert_eq!(select_index(&c, 80.0, 1.0).unwrap(), 3);
        let far = [s(60.0, 0.0, 0), s(75.0, 0.5, 1)];
        assert_eq!(select_index(&far, 80.0, 1.0).unwrap(), 1);
    }
}
