//! Empirical and Monte-Carlo fairness constraint functionals.
//!
//! Every empirical functional is a function of the per-sample scores and
//! comes with its gradient with respect to those scores, which the trainer
//! chains through the model's backward pass. The absolute value in the
//! group-gap criteria is differentiated as `sign(gap)`, with zero at a zero
//! gap. Positive classification is strict: `f(x) > 0`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::norm2;
use crate::nn::ScoreModel;
use crate::rng::{substream, Rng};
use crate::surrogate::{SurrogateKind, SurrogateSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Di,
    Eo,
    Eqopp,
    Uif,
    DiBoundary,
    Cov,
    IfPairwise,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 7] = [
        CriterionKind::Di,
        CriterionKind::Eo,
        CriterionKind::Eqopp,
        CriterionKind::Uif,
        CriterionKind::DiBoundary,
        CriterionKind::Cov,
        CriterionKind::IfPairwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Di => "di",
            CriterionKind::Eo => "eo",
            CriterionKind::Eqopp => "eqopp",
            CriterionKind::Uif => "uif",
            CriterionKind::DiBoundary => "di_boundary",
            CriterionKind::Cov => "cov",
            CriterionKind::IfPairwise => "if_pairwise",
        }
    }

    pub fn is_group(self) -> bool {
        matches!(
            self,
            CriterionKind::Di
                | CriterionKind::Eo
                | CriterionKind::Eqopp
                | CriterionKind::DiBoundary
        )
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CriterionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "criterion",
                name: s.to_string(),
            })
    }
}

/// Fairness criterion and its parameters. Parameters not used by the chosen
/// criterion are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub criterion: CriterionKind,
    /// Fairness level for `phi(f) <= alpha`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// UIF / pairwise-IF slack.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Width of the DI-boundary band `(0, tau_boundary]`.
    #[serde(default = "default_tau_boundary")]
    pub tau_boundary: f64,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.01
}
fn default_tau_boundary() -> f64 {
    0.1
}

impl ConstraintSpec {
    pub fn new(criterion: CriterionKind) -> Self {
        Self {
            criterion,
            alpha: default_alpha(),
            gamma: default_gamma(),
            tau_boundary: default_tau_boundary(),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_tau_boundary(mut self, tau: f64) -> Self {
        self.tau_boundary = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.criterion;
        if c != CriterionKind::Cov && !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConstraint(format!(
                "alpha must lie in [0, 1] for {c}, got {}",
                self.alpha
            )));
        }
        if matches!(c, CriterionKind::Uif | CriterionKind::IfPairwise)
            && !(self.gamma > 0.0 && self.gamma.is_finite())
        {
            return Err(Error::InvalidConstraint(format!(
                "gamma must be > 0 for {c}, got {}",
                self.gamma
            )));
        }
        if c == CriterionKind::DiBoundary
            && (self.tau_boundary.is_nan() || self.tau_boundary <= 0.0)
        {
            return Err(Error::InvalidConstraint(format!(
                "tau_boundary must be > 0, got {}",
                self.tau_boundary
            )));
        }
        Ok(())
    }
}

/// Scores of one sample set together with labels and sensitive attribute.
#[derive(Debug, Clone, Copy)]
pub struct ScoredBatch<'a> {
    pub scores: &'a [f64],
    /// Scores of the adversarial neighbours `f(v_i')`, for UIF.
    pub adv_scores: Option<&'a [f64]>,
    pub y: &'a [i8],
    pub z: &'a [u8],
}

impl<'a> ScoredBatch<'a> {
    pub fn new(scores: &'a [f64], y: &'a [i8], z: &'a [u8]) -> Result<Self> {
        if y.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                context: "batch labels",
                expected: scores.len(),
                actual: y.len(),
            });
        }
        if z.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                context: "batch sensitive attribute",
                expected: scores.len(),
                actual: z.len(),
            });
        }
        Ok(Self {
            scores,
            adv_scores: None,
            y,
            z,
        })
    }

    pub fn with_adversarial(mut self, adv: &'a [f64]) -> Result<Self> {
        if adv.len() != self.scores.len() {
            return Err(Error::DimensionMismatch {
                context: "adversarial scores",
                expected: self.scores.len(),
                actual: adv.len(),
            });
        }
        self.adv_scores = Some(adv);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn group_counts(&self) -> (usize, usize) {
        let n1 = self.z.iter().filter(|&&z| z == 1).count();
        (self.len() - n1, n1)
    }
}

/// Constraint value and its gradient with respect to the scores (and the
/// adversarial scores, for UIF).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub adv_grad: Option<Vec<f64>>,
}

fn cell_name(z: u8, y: Option<i8>) -> String {
    match y {
        None => format!("z={z}"),
        Some(y) => format!("z={z},y={y:+}"),
    }
}

/// Per-group means of `h(f_i)` over the rows with the given label filter:
/// returns `(mean_{z=0}, mean_{z=1}, n_0, n_1)`.
pub fn group_means(
    batch: &ScoredBatch<'_>,
    y_filter: Option<i8>,
    h: impl Fn(f64) -> f64,
) -> Result<(f64, f64, usize, usize)> {
    let mut sum = [0.0f64; 2];
    let mut cnt = [0usize; 2];
    for i in 0..batch.len() {
        if y_filter.is_some_and(|y| batch.y[i] != y) {
            continue;
        }
        let g = usize::from(batch.z[i] == 1);
        sum[g] += h(batch.scores[i]);
        cnt[g] += 1;
    }
    if let Some(g) = cnt.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCell {
            cell: cell_name(g as u8, y_filter),
        });
    }
    Ok((
        sum[0] / cnt[0] as f64,
        sum[1] / cnt[1] as f64,
        cnt[0],
        cnt[1],
    ))
}

/// `|mean_{z=0} h(f) - mean_{z=1} h(f)|` with its score gradient.
fn group_gap(
    batch: &ScoredBatch<'_>,
    y_filter: Option<i8>,
    h: impl Fn(f64) -> f64,
    dh: impl Fn(f64) -> f64,
) -> Result<ConstraintEval> {
    let (m0, m1, n0, n1) = group_means(batch, y_filter, &h)?;
    let gap = m0 - m1;
    let sign = if gap > 0.0 {
        1.0
    } else if gap < 0.0 {
        -1.0
    } else {
        0.0
    };
    let mut grad = vec![0.0; batch.len()];
    if sign != 0.0 {
        for (i, g) in grad.iter_mut().enumerate() {
            if y_filter.is_some_and(|y| batch.y[i] != y) {
                continue;
            }
            let w = if batch.z[i] == 1 {
                -1.0 / n1 as f64
            } else {
                1.0 / n0 as f64
            };
            *g = sign * w * dh(batch.scores[i]);
        }
    }
    Ok(ConstraintEval {
        value: gap.abs(),
        grad,
        adv_grad: None,
    })
}

fn eo_like(batch: &ScoredBatch<'_>, s: &SurrogateSpec, ys: &[i8]) -> Result<ConstraintEval> {
    let mut best: Option<ConstraintEval> = None;
    for &y in ys {
        let e = group_gap(batch, Some(y), |f| s.value(f), |f| s.grad(f))?;
        if best.as_ref().is_none_or(|b| e.value > b.value) {
            best = Some(e);
        }
    }
    Ok(best.expect("at least one label"))
}

/// DI, EO or EqOpp composed with a surrogate.
pub fn empirical_group_constraint(
    batch: &ScoredBatch<'_>,
    criterion: CriterionKind,
    surrogate: &SurrogateSpec,
) -> Result<ConstraintEval> {
    let s = surrogate;
    match criterion {
        CriterionKind::Di => group_gap(batch, None, |f| s.value(f), |f| s.grad(f)),
        CriterionKind::Eo => eo_like(batch, s, &[-1, 1]),
        CriterionKind::Eqopp => eo_like(batch, s, &[1]),
        other => Err(Error::InvalidConstraint(format!(
            "{other} is not a DI/EO/EqOpp criterion"
        ))),
    }
}

/// Mean of `s(|f(x_i) - f(v_i')| - gamma)`.
pub fn empirical_uif(
    batch: &ScoredBatch<'_>,
    gamma: f64,
    surrogate: &SurrogateSpec,
) -> Result<ConstraintEval> {
    let adv = batch.adv_scores.ok_or(Error::MissingAdversarialScores)?;
    let n = batch.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; batch.len()];
    let mut adv_grad = vec![0.0; batch.len()];
    for i in 0..batch.len() {
        let a = batch.scores[i] - adv[i];
        let m = a.abs() - gamma;
        value += surrogate.value(m);
        let ds = surrogate.grad(m);
        if ds != 0.0 && a != 0.0 {
            let g = ds * a.signum() / n;
            grad[i] = g;
            adv_grad[i] = -g;
        }
    }
    Ok(ConstraintEval {
        value: value / n,
        grad,
        adv_grad: Some(adv_grad),
    })
}

/// Group gap of band membership `s(f) - s(f - tau_b)`; with the indicator
/// this is `I(0 < f <= tau_b)`.
pub fn di_boundary(
    batch: &ScoredBatch<'_>,
    tau_boundary: f64,
    surrogate: &SurrogateSpec,
) -> Result<ConstraintEval> {
    let s = surrogate;
    group_gap(
        batch,
        None,
        |f| s.value(f) - s.value(f - tau_boundary),
        |f| s.grad(f) - s.grad(f - tau_boundary),
    )
}

/// `|n^-1 sum (z_i - z_bar) f_i|`.
pub fn covariance_constraint(batch: &ScoredBatch<'_>) -> ConstraintEval {
    let n = batch.len();
    if n == 0 {
        return ConstraintEval {
            value: 0.0,
            grad: Vec::new(),
            adv_grad: None,
        };
    }
    let nf = n as f64;
    let zbar = batch.z.iter().map(|&z| f64::from(z)).sum::<f64>() / nf;
    let cov = batch
        .z
        .iter()
        .zip(batch.scores)
        .map(|(&z, &f)| (f64::from(z) - zbar) * f)
        .sum::<f64>()
        / nf;
    let sign = if cov > 0.0 {
        1.0
    } else if cov < 0.0 {
        -1.0
    } else {
        0.0
    };
    let grad = batch
        .z
        .iter()
        .map(|&z| sign * (f64::from(z) - zbar) / nf)
        .collect();
    ConstraintEval {
        value: cov.abs(),
        grad,
        adv_grad: None,
    }
}

/// Dispatch on the criterion of `spec`.
pub fn empirical_constraint(
    batch: &ScoredBatch<'_>,
    spec: &ConstraintSpec,
    surrogate: &SurrogateSpec,
) -> Result<ConstraintEval> {
    match spec.criterion {
        CriterionKind::Di | CriterionKind::Eo | CriterionKind::Eqopp => {
            empirical_group_constraint(batch, spec.criterion, surrogate)
        }
        CriterionKind::Uif => empirical_uif(batch, spec.gamma, surrogate),
        CriterionKind::DiBoundary => di_boundary(batch, spec.tau_boundary, surrogate),
        CriterionKind::Cov => Ok(covariance_constraint(batch)),
        CriterionKind::IfPairwise => Err(Error::InvalidConstraint(
            "if_pairwise is a population criterion; use the Monte-Carlo estimator".into(),
        )),
    }
}

/// Draws inputs from a known data law.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;

    /// Joint draw `(x, y, z)`.
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8);

    /// Draw `x` conditional on `Z = z` and, if given, `Y = y`.
    fn draw_given(&self, z: u8, y: Option<i8>, rng: &mut Rng) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

/// Label filter, group 0 draws, group 1 draws.
pub type GroupCell = (Option<i8>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Pre-drawn Monte-Carlo inputs, so that many models can be evaluated on
/// common random numbers.
#[derive(Debug, Clone)]
pub enum McSample {
    /// `cells[k]` holds draws from the `k`-th pair of conditional laws
    /// compared by a group gap: `(group 0 draws, group 1 draws)`.
    Groups { cells: Vec<GroupCell> },
    /// Independent pairs `(x, x')` from the marginal law.
    Pairs { pairs: Vec<(Vec<f64>, Vec<f64>)> },
    /// Joint draws for the covariance criterion.
    Joint { xs: Vec<Vec<f64>>, zs: Vec<u8> },
}

const MC_CHUNK: usize = 4096;

fn chunked<T: Send>(n: usize, seed: u64, name: &str, f: impl Fn(&mut Rng) -> T + Sync) -> Vec<T> {
    let chunks = n.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = substream(seed, name, c as u64);
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            (0..len).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

impl McSample {
    /// Draw `n_mc` samples for `criterion` (per group for group criteria).
    pub fn draw(
        sampler: &dyn Sampler,
        criterion: CriterionKind,
        n_mc: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::InvalidConstraint("n_mc must be positive".into()));
        }
        let ys: Vec<Option<i8>> = match criterion {
            CriterionKind::Di | CriterionKind::DiBoundary => vec![None],
            CriterionKind::Eo => vec![Some(-1), Some(1)],
            CriterionKind::Eqopp => vec![Some(1)],
            CriterionKind::IfPairwise => {
                let pairs = chunked(n_mc, seed, "mc.pairs", |rng| {
                    let (a, _, _) = sampler.draw(rng);
                    let (b, _, _) = sampler.draw(rng);
                    (a, b)
                });
                return Ok(McSample::Pairs { pairs });
            }
            CriterionKind::Cov => {
                let draws = chunked(n_mc, seed, "mc.joint", |rng| {
                    let (x, _, z) = sampler.draw(rng);
                    (x, z)
                });
                let (xs, zs) = draws.into_iter().unzip();
                return Ok(McSample::Joint { xs, zs });
            }
            CriterionKind::Uif => {
                return Err(Error::InvalidConstraint(
                    "population uif is not estimated; use if_pairwise".into(),
                ))
            }
        };
        let cells = ys
            .into_iter()
            .enumerate()
            .map(|(k, y)| {
                let g0 = chunked(n_mc, seed, &format!("mc.cell{k}.z0"), |rng| {
                    sampler.draw_given(0, y, rng)
                });
                let g1 = chunked(n_mc, seed, &format!("mc.cell{k}.z1"), |rng| {
                    sampler.draw_given(1, y, rng)
                });
                (y, g0, g1)
            })
            .collect();
        Ok(McSample::Groups { cells })
    }

    /// Estimate the population constraint of `model` on these draws.
    ///
    /// For a group gap the standard error is that of the difference of the
    /// two independent group means.
    pub fn estimate(
        &self,
        model: &dyn ScoreModel,
        spec: &ConstraintSpec,
        surrogate: &SurrogateSpec,
    ) -> McEstimate {
        let s = surrogate;
        match self {
            McSample::Groups { cells } => {
                let h = |f: f64| match spec.criterion {
                    CriterionKind::DiBoundary => s.value(f) - s.value(f - spec.tau_boundary),
                    _ => s.value(f),
                };
                let mut best = McEstimate {
                    value: f64::NEG_INFINITY,
                    std_error: 0.0,
                    n_mc: 0,
                };
                for (_, g0, g1) in cells {
                    let (m0, v0) = mean_var(g0.iter().map(|x| h(model.score(x))));
                    let (m1, v1) = mean_var(g1.iter().map(|x| h(model.score(x))));
                    let est = McEstimate {
                        value: (m0 - m1).abs(),
                        std_error: (v0 / g0.len() as f64 + v1 / g1.len() as f64).sqrt(),
                        n_mc: g0.len(),
                    };
                    if est.value > best.value {
                        best = est;
                    }
                }
                best
            }
            McSample::Pairs { pairs } => {
                let (m, v) = mean_var(pairs.iter().map(|(a, b)| {
                    let df = (model.score(a) - model.score(b)).abs();
                    let dx = norm2(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
                    s.value(df - dx - spec.gamma)
                }));
                McEstimate {
                    value: m,
                    std_error: (v / pairs.len() as f64).sqrt(),
                    n_mc: pairs.len(),
                }
            }
            McSample::Joint { xs, zs } => {
                let n = xs.len() as f64;
                let zbar = zs.iter().map(|&z| f64::from(z)).sum::<f64>() / n;
                let terms: Vec<f64> = xs
                    .iter()
                    .zip(zs)
                    .map(|(x, &z)| (f64::from(z) - zbar) * model.score(x))
                    .collect();
                let (m, v) = mean_var(terms.into_iter());
                McEstimate {
                    value: m.abs(),
                    std_error: (v / n).sqrt(),
                    n_mc: xs.len(),
                }
            }
        }
    }
}

/// Mean and unbiased variance, by Welford's update.
fn mean_var(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in it {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, var)
}

/// Monte-Carlo estimate of the population constraint `phi(f)`.
pub fn mc_population_constraint(
    model: &dyn ScoreModel,
    sampler: &dyn Sampler,
    spec: &ConstraintSpec,
    surrogate: &SurrogateSpec,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    spec.validate()?;
    surrogate.validate()?;
    if surrogate.kind == SurrogateKind::Linear && spec.criterion == CriterionKind::IfPairwise {
        return Err(Error::InvalidSurrogate(
            "linear surrogate is unbounded for a probability criterion".into(),
        ));
    }
    let sample = McSample::draw(sampler, spec.criterion, n_mc, seed)?;
    Ok(sample.estimate(model, spec, surrogate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelParams;
    use crate::rng::Rng;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn batch<'a>(f: &'a [f64], y: &'a [i8], z: &'a [u8]) -> ScoredBatch<'a> {
        ScoredBatch::new(f, y, z).unwrap()
    }

    #[test]
    fn di_direct_count() {
        let f = [1.0, -1.0, 1.0, 1.0];
        let y = [1, 1, 1, 1];
        let z = [0, 0, 1, 1];
        let e = empirical_group_constraint(
            &batch(&f, &y, &z),
            CriterionKind::Di,
            &SurrogateSpec::indicator(),
        )
        .unwrap();
        assert_eq!(e.value, 0.5);
    }

    #[test]
    fn equal_scores_give_zero() {
        let f = [0.3; 6];
        let y = [1, -1, 1, -1, 1, -1];
        let z = [0, 0, 0, 1, 1, 1];
        for s in [
            SurrogateSpec::indicator(),
            SurrogateSpec::hinge(),
            SurrogateSpec::slide(0.1).unwrap(),
        ] {
            for c in [CriterionKind::Di, CriterionKind::Eo, CriterionKind::Eqopp] {
                let e = empirical_group_constraint(&batch(&f, &y, &z), c, &s).unwrap();
                assert_eq!(e.value, 0.0);
            }
        }
    }

    #[test]
    fn empty_cell_is_named() {
        let f = [1.0, 2.0, 3.0];
        let y = [1, -1, -1];
        let z = [0, 1, 1];
        let err = empirical_group_constraint(
            &batch(&f, &y, &z),
            CriterionKind::Eqopp,
            &SurrogateSpec::indicator(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("z=1,y=+1"), "{err}");
        let z = [1, 1, 1];
        assert!(matches!(
            empirical_group_constraint(
                &batch(&f, &y, &z),
                CriterionKind::Di,
                &SurrogateSpec::indicator()
            ),
            Err(Error::EmptyCell { .. })
        ));
    }

    #[test]
    fn uif_cases() {
        let f = [0.1, 0.5, -2.0];
        let y = [1, 1, -1];
        let z = [0, 1, 0];
        let s = SurrogateSpec::slide(0.1).unwrap();
        let b = batch(&f, &y, &z);
        assert!(matches!(
            empirical_uif(&b, 0.01, &s),
            Err(Error::MissingAdversarialScores)
        ));
        let same = b.with_adversarial(&f).unwrap();
        assert_eq!(empirical_uif(&same, 0.01, &s).unwrap().value, 0.0);
        let gamma = 0.01;
        let far: Vec<f64> = f.iter().map(|v| v + gamma + 0.1 + 1.0).collect();
        let b2 = batch(&f, &y, &z).with_adversarial(&far).unwrap();
        assert_eq!(empirical_uif(&b2, gamma, &s).unwrap().value, 1.0);
    }

    #[test]
    fn di_boundary_cases() {
        let tau = 0.2;
        let f = [0.5, 0.9];
        let y = [1, 1];
        let z = [0, 1];
        let e = di_boundary(&batch(&f, &y, &z), tau, &SurrogateSpec::indicator()).unwrap();
        assert_eq!(e.value, 0.0);
        let f = [tau / 2.0, 2.0 * tau];
        let e = di_boundary(&batch(&f, &y, &z), tau, &SurrogateSpec::indicator()).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn covariance_cases() {
        let f = [3.0, -1.0, 2.0];
        let y = [1, 1, 1];
        assert_eq!(covariance_constraint(&batch(&f, &y, &[1, 1, 1])).value, 0.0);
        let e = covariance_constraint(&batch(&[0.0, 1.0], &[1, 1], &[0, 1]));
        assert_eq!(e.value, 0.25);
    }

    #[test]
    fn spec_parses_names() {
        for c in CriterionKind::ALL {
            assert_eq!(c.name().parse::<CriterionKind>().unwrap(), c);
        }
        let spec: ConstraintSpec =
            toml::from_str("criterion = \"di_boundary\"\nalpha = 0.1").unwrap();
        assert_eq!(spec.criterion, CriterionKind::DiBoundary);
        assert_eq!(spec.tau_boundary, 0.1);
        assert!(ConstraintSpec::new(CriterionKind::Di)
            .with_alpha(1.5)
            .validate()
            .is_err());
    }

    fn random_batch(rng: &mut Rng, n: usize) -> (Vec<f64>, Vec<i8>, Vec<u8>) {
        let f = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let mut y: Vec<i8> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
            .collect();
        let mut z: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        // Guarantee every (z, y) cell is populated.
        for (i, (zz, yy)) in [(0, -1), (0, 1), (1, -1), (1, 1)].into_iter().enumerate() {
            z[i] = zz;
            y[i] = yy;
        }
        (f, y, z)
    }

    #[test]
    fn di_matches_direct_average_of_slide() {
        let mut rng = substream(5, "test", 0);
        let tau = 0.1;
        let (f, y, z) = random_batch(&mut rng, 20);
        let e = empirical_group_constraint(
            &batch(&f, &y, &z),
            CriterionKind::Di,
            &SurrogateSpec::slide(tau).unwrap(),
        )
        .unwrap();
        let ramp = |v: f64| (v / tau).clamp(0.0, 1.0);
        let avg = |g: u8| {
            let v: Vec<f64> = (0..20).filter(|&i| z[i] == g).map(|i| ramp(f[i])).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((e.value - (avg(0) - avg(1)).abs()).abs() < 1e-12);
    }

    #[test]
    fn group_gradients_match_finite_differences() {
        let mut rng = substream(6, "test", 0);
        let (f, y, z) = random_batch(&mut rng, 30);
        let s = SurrogateSpec::slide(0.5).unwrap();
        for c in [CriterionKind::Di, CriterionKind::Eo, CriterionKind::Eqopp] {
            let e = empirical_group_constraint(&batch(&f, &y, &z), c, &s).unwrap();
            for i in 0..f.len() {
                let h = 1e-6;
                let mut fp = f.clone();
                fp[i] += h;
                let mut fm = f.clone();
                fm[i] -= h;
                let vp = empirical_group_constraint(&batch(&fp, &y, &z), c, &s)
                    .unwrap()
                    .value;
                let vm = empirical_group_constraint(&batch(&fm, &y, &z), c, &s)
                    .unwrap()
                    .value;
                assert!(((vp - vm) / (2.0 * h) - e.grad[i]).abs() < 1e-6);
            }
        }
    }

    struct Gauss1d;

    impl Sampler for Gauss1d {
        fn dim(&self) -> usize {
            1
        }
        fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
            let z = u8::from(rng.gen_bool(0.5));
            (self.draw_given(z, None, rng), 1, z)
        }
        fn draw_given(&self, z: u8, _y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
            let e: f64 = StandardNormal.sample(rng);
            vec![if z == 1 { 1.0 } else { -1.0 } + e]
        }
    }

    #[test]
    fn mc_di_matches_closed_form() {
        let (b0, b) = (0.3, 0.8);
        let model = ModelParams::linear(&[b], b0);
        let spec = ConstraintSpec::new(CriterionKind::Di);
        let est = mc_population_constraint(
            &model,
            &Gauss1d,
            &spec,
            &SurrogateSpec::indicator(),
            20_000,
            1,
        )
        .unwrap();
        let c = b0 / b;
        let exact = (crate::normal::cdf(-c + 1.0) - crate::normal::cdf(-c - 1.0)).abs();
        assert!(
            (est.value - exact).abs() < 3.0 * est.std_error,
            "{est:?} vs {exact}"
        );
        assert!(est.std_error <= (0.5 / 20_000f64).sqrt());
    }

    #[test]
    fn mc_constant_model_pairwise_is_zero() {
        let model = ModelParams::linear(&[0.0], 1.7);
        let spec = ConstraintSpec::new(CriterionKind::IfPairwise).with_gamma(0.3);
        let est = mc_population_constraint(
            &model,
            &Gauss1d,
            &spec,
            &SurrogateSpec::indicator(),
            1000,
            2,
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn mc_is_bit_reproducible() {
        let model = ModelParams::linear(&[1.3], -0.2);
        let spec = ConstraintSpec::new(CriterionKind::IfPairwise).with_gamma(0.3);
        let s = SurrogateSpec::slide(0.1).unwrap();
        let a = mc_population_constraint(&model, &Gauss1d, &spec, &s, 100_000, 9).unwrap();
        let b = mc_population_constraint(&model, &Gauss1d, &spec, &s, 100_000, 9).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(a.std_error <= (0.25 / 100_000f64).sqrt());
    }

    proptest! {
        #[test]
        fn group_averages_sandwich(fs in proptest::collection::vec(-2.0f64..2.0, 4..40), tau in 0.01f64..1.0) {
            let n = fs.len();
            let y = vec![1i8; n];
            let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let b = batch(&fs, &y, &z);
            let sl = SurrogateSpec::slide(tau).unwrap();
            let op = SurrogateSpec::opposite_slide(tau).unwrap();
            let (s0, s1, _, _) = group_means(&b, None, |f| sl.value(f)).unwrap();
            let (i0, i1, _, _) = group_means(&b, None, |f| f64::from(u8::from(f > 0.0))).unwrap();
            let (o0, o1, _, _) = group_means(&b, None, |f| op.value(f)).unwrap();
            let (h0, h1, _, _) = group_means(&b, None, |f| SurrogateSpec::hinge().value(f)).unwrap();
            prop_assert!(s0 <= i0 && i0 <= o0 && i0 <= h0);
            prop_assert!(s1 <= i1 && i1 <= o1 && i1 <= h1);
        }

        #[test]
        fn indicator_di_scale_free(fs in proptest::collection::vec(-2.0f64..2.0, 4..40), c in 0.01f64..100.0) {
            let n = fs.len();
            let y = vec![1i8; n];
            let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let scaled: Vec<f64> = fs.iter().map(|f| f * c).collect();
            let ind = SurrogateSpec::indicator();
            let a = empirical_group_constraint(&batch(&fs, &y, &z), CriterionKind::Di, &ind).unwrap().value;
            let b = empirical_group_constraint(&batch(&scaled, &y, &z), CriterionKind::Di, &ind).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn probability_criteria_in_unit_interval(
            fs in proptest::collection::vec(-2.0f64..2.0, 8..40),
            adv in proptest::collection::vec(-2.0f64..2.0, 40),
            tau in 0.01f64..1.0,
        ) {
            let n = fs.len();
            let y: Vec<i8> = (0..n).map(|i| if i % 4 < 2 { 1 } else { -1 }).collect();
            let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let b = batch(&fs, &y, &z).with_adversarial(&adv[..n]).unwrap();
            for s in [SurrogateSpec::indicator(), SurrogateSpec::slide(tau).unwrap()] {
                for c in [CriterionKind::Di, CriterionKind::Eo, CriterionKind::Eqopp, CriterionKind::Uif, CriterionKind::DiBoundary] {
                    let spec = ConstraintSpec::new(c);
                    let v = empirical_constraint(&b, &spec, &s).unwrap().value;
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
