use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{empirical_constraint, ConstraintSpec, CriterionKind, ScoredBatch};
use crate::data::synth::ConvergenceSim;
use crate::data::{Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::nn::{softplus, Architecture, ModelParams};
use crate::normal::cdf;
use crate::rng::derive_seed;
use crate::surrogate::SurrogateSpec;
use crate::train::{train_penalized_from, ModelSpec, TrainConfig};

/// Nodes and weights of `n`-point Gauss-Hermite quadrature for the standard
/// normal measure (weights sum to one), by the Golub-Welsch eigenproblem.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// Population quantities of the four-cell Gaussian law for a linear score
/// on `(x, [s=0], [s=1])`.
#[derive(Debug, Clone)]
pub struct Population {
    pub law: ConvergenceSim,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const CELLS: [(u8, i8); 4] = [(0, -1), (0, 1), (1, -1), (1, 1)];

impl Population {
    pub fn new(law: ConvergenceSim) -> Self {
        let (nodes, weights) = gauss_hermite(80);
        Self {
            law,
            nodes,
            weights,
        }
    }

    /// `(slope, intercept for s=0, intercept for s=1)`.
    fn coefs(model: &ModelParams) -> Result<(f64, [f64; 2])> {
        match model.architecture() {
            Architecture::Linear { input_dim: 3 } => {
                let p = model.params();
                Ok((p[0], [p[3] + p[1], p[3] + p[2]]))
            }
            _ => Err(Error::InvalidConfig(
                "population quantities need a linear model on (x, s0, s1)".into(),
            )),
        }
    }

    fn risk_of(&self, w: f64, c: [f64; 2]) -> f64 {
        CELLS
            .iter()
            .map(|&(s, y)| {
                let k = ConvergenceSim::cell(s, y);
                let (m, sd) = (self.law.means[k], self.law.vars[k].sqrt());
                let e: f64 = self
                    .nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, g)| {
                        g * softplus(-f64::from(y) * (c[usize::from(s)] + w * (m + sd * x)))
                    })
                    .sum();
                self.law.cell_prob(s, y) * e
            })
            .sum()
    }

    fn positive_rate(&self, w: f64, c: f64, s: u8) -> f64 {
        let ps = self.law.cell_prob(s, -1) + self.law.cell_prob(s, 1);
        [-1i8, 1]
            .iter()
            .map(|&y| {
                let k = ConvergenceSim::cell(s, y);
                let (m, sd) = (self.law.means[k], self.law.vars[k].sqrt());
                let p = if w == 0.0 {
                    f64::from(u8::from(c > 0.0))
                } else {
                    cdf((c + w * m) / (w.abs() * sd))
                };
                self.law.cell_prob(s, y) / ps * p
            })
            .sum()
    }

    fn di_of(&self, w: f64, c: [f64; 2]) -> f64 {
        (self.positive_rate(w, c[0], 0) - self.positive_rate(w, c[1], 1)).abs()
    }

    /// Population logistic risk.
    pub fn risk(&self, model: &ModelParams) -> Result<f64> {
        let (w, c) = Self::coefs(model)?;
        Ok(self.risk_of(w, c))
    }

    /// Population disparate impact under the indicator.
    pub fn di(&self, model: &ModelParams) -> Result<f64> {
        let (w, c) = Self::coefs(model)?;
        Ok(self.di_of(w, c))
    }
}

fn to_model(w: f64, c: [f64; 2]) -> ModelParams {
    ModelParams::linear(&[w, c[0], c[1]], 0.0)
}

/// Minimizer of the population risk subject to `DI <= alpha`, by a
/// coarse-to-fine grid over `(slope, c0, c1)`.
pub fn constrained_optimum(pop: &Population, alpha: f64) -> Result<(ModelParams, f64)> {
    let mut lo = [-1.0, -6.0, -6.0];
    let mut hi = [4.0, 6.0, 6.0];
    let mut best: Option<([f64; 3], f64)> = None;
    for round in 0..12 {
        let n = if round == 0 { 41 } else { 21 };
        let axis = |a: usize| -> Vec<f64> {
            (0..n)
                .map(|i| lo[a] + (hi[a] - lo[a]) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let (ws, c0s, c1s) = (axis(0), axis(1), axis(2));
        let found = ws
            .par_iter()
            .filter_map(|&w| {
                let mut local: Option<([f64; 3], f64)> = None;
                for &c0 in &c0s {
                    for &c1 in &c1s {
                        if pop.di_of(w, [c0, c1]) > alpha {
                            continue;
                        }
                        let r = pop.risk_of(w, [c0, c1]);
                        if local.is_none_or(|(_, b)| r < b) {
                            local = Some(([w, c0, c1], r));
                        }
                    }
                }
                local
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some(f) = found {
            if best.is_none_or(|(_, b)| f.1 < b) {
                best = Some(f);
            }
        }
        let Some((p, _)) = best else {
            return Err(Error::InfeasibleGrid { alpha });
        };
        for a in 0..3 {
            let half = (hi[a] - lo[a]) / 8.0;
            lo[a] = p[a] - half;
            hi[a] = p[a] + half;
        }
    }
    let (p, r) = best.ok_or(Error::InfeasibleGrid { alpha })?;
    Ok((to_model(p[0], [p[1], p[2]]), r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_values: Vec<usize>,
    pub seeds: usize,
    pub alpha: f64,
    pub tau: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Bisection steps over `log10(lambda)`.
    pub bisection_steps: usize,
    pub log10_lambda: [f64; 2],
    pub law: ConvergenceSim,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_values: vec![250, 1000, 4000, 16000],
            seeds: 10,
            alpha: 0.2,
            tau: 0.1,
            epochs: 1000,
            lr: 0.05,
            bisection_steps: 10,
            log10_lambda: [-2.0, 2.5],
            law: ConvergenceSim {
                p_y1: [0.35, 0.65],
                ..Default::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub excess_risk_median: f64,
    pub fairness_dev_median: f64,
    /// Per seed, absolute.
    pub excess_risk: Vec<f64>,
    pub fairness_dev: Vec<f64>,
    pub lambda: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn slide_di(
    model: &ModelParams,
    data: &Dataset,
    spec: &ConstraintSpec,
    s: &SurrogateSpec,
) -> Result<f64> {
    let scores = model.forward(&data.x)?;
    Ok(empirical_constraint(&ScoredBatch::new(&scores, &data.y, &data.z)?, spec, s)?.value)
}

/// One replicate: fit at `lambda = 0`, then bisect `log10(lambda)` for the
/// smallest penalty whose training SLIDE-DI is at most `alpha`, each fit
/// warm-started from the unpenalized one. Returns the model and lambda.
fn fit_replicate(cfg: &SimulationConfig, data: &Dataset, seed: u64) -> Result<(ModelParams, f64)> {
    let surrogate = SurrogateSpec::slide(cfg.tau)?;
    let spec = ConstraintSpec::new(CriterionKind::Di).with_alpha(cfg.alpha);
    let base = TrainConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        lambda: 0.0,
        surrogate,
        constraint: spec,
        model: ModelSpec::Linear,
        seed,
        ..Default::default()
    };
    let zeros = ModelParams::zeros(Architecture::Linear {
        input_dim: data.d(),
    })?;
    let w0 = train_penalized_from(data, &base, zeros)?.model().clone();
    let [mut lo, mut hi] = cfg.log10_lambda;
    let mut best: Option<(ModelParams, f64)> = None;
    let mut last = (w0.clone(), 0.0);
    for _ in 0..cfg.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let lambda = 10f64.powf(mid);
        let run = TrainConfig {
            lambda,
            ..base.clone()
        };
        let m = train_penalized_from(data, &run, w0.clone())?
            .model()
            .clone();
        if slide_di(&m, data, &spec, &surrogate)? <= cfg.alpha {
            hi = mid;
            best = Some((m.clone(), lambda));
        } else {
            lo = mid;
        }
        last = (m, lambda);
    }
    Ok(best.unwrap_or(last))
}

/// Per sample size: medians over seeds of `|R(f_hat) - R(f*)|` against the
/// constrained optimum and of `|DI(f_hat) - alpha|`, both exact population
/// values for the linear model. The risk gap is taken in absolute value
/// since a fitted model that violates the constraint can beat `f*`.
pub fn simulate_convergence(cfg: &SimulationConfig) -> Result<Vec<ConvergenceRow>> {
    if cfg.n_values.is_empty() || cfg.n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "n_values must be non-empty and ascending".into(),
        ));
    }
    if cfg.seeds == 0 {
        return Err(Error::InvalidConfig("seeds must be >= 1".into()));
    }
    let pop = Population::new(cfg.law.clone());
    let (_, r_star) = constrained_optimum(&pop, cfg.alpha)?;
    let spec = SynthSpec::ConvergenceSim(cfg.law.clone());
    let jobs: Vec<(usize, usize)> = cfg
        .n_values
        .iter()
        .flat_map(|&n| (0..cfg.seeds).map(move |s| (n, s)))
        .collect();
    let results: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(n, s)| {
            let seed = derive_seed(derive_seed(cfg.seed, "replicate", s as u64), "n", n as u64);
            let data = spec.generate(n, seed)?;
            let (m, lambda) = fit_replicate(cfg, &data, seed)?;
            Ok((
                (pop.risk(&m)? - r_star).abs(),
                (pop.di(&m)? - cfg.alpha).abs(),
                lambda,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(cfg
        .n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let chunk = &results[i * cfg.seeds..(i + 1) * cfg.seeds];
            let ex: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let dev: Vec<f64> = chunk.iter().map(|r| r.1).collect();
            ConvergenceRow {
                n,
                excess_risk_median: median(&ex),
                fairness_dev_median: median(&dev),
                excess_risk: ex,
                fairness_dev: dev,
                lambda: chunk.iter().map(|r| r.2).collect(),
            }
        })
        .collect())
}

/// Columns `n, excess_risk_median, fairness_dev_median`.
pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "excess_risk_median", "fairness_dev_median"])?;
    for r in rows {
        w.serialize((r.n, r.excess_risk_median, r.fairness_dev_median))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::mc_population_constraint;

    #[test]
    fn quadrature_moments() {
        let (x, w) = gauss_hermite(80);
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-12);
        assert!(m(1).abs() < 1e-12);
        assert!((m(2) - 1.0).abs() < 1e-10);
        assert!((m(4) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn population_di_matches_monte_carlo() {
        let law = ConvergenceSim {
            p_y1: [0.35, 0.65],
            ..Default::default()
        };
        let pop = Population::new(law.clone());
        let m = ModelParams::linear(&[1.2, -0.4, 0.3], 0.1);
        let spec = ConstraintSpec::new(CriterionKind::Di);
        let est = mc_population_constraint(&m, &law, &spec, &SurrogateSpec::indicator(), 50_000, 4)
            .unwrap();
        let di = pop.di(&m).unwrap();
        assert!(
            (est.value - di).abs() <= 4.0 * est.std_error,
            "{} vs {di}",
            est.value
        );
    }

    #[test]
    fn optimum_is_feasible_and_has_zero_excess() {
        let pop = Population::new(SimulationConfig::default().law);
        let (m, r) = constrained_optimum(&pop, 0.2).unwrap();
        assert!(pop.di(&m).unwrap() <= 0.2);
        assert!((pop.risk(&m).unwrap() - r).abs() < 1e-12);
        let (_, r_free) = constrained_optimum(&pop, 1.0).unwrap();
        assert!(r_free <= r);
    }

    #[test]
    fn infeasible_alpha() {
        let pop = Population::new(ConvergenceSim::default());
        assert!(matches!(
            constrained_optimum(&pop, -1.0),
            Err(Error::InfeasibleGrid { .. })
        ));
    }

    #[test]
    fn small_run_is_deterministic() {
        let cfg = SimulationConfig {
            n_values: vec![100, 200],
            seeds: 2,
            epochs: 50,
            bisection_steps: 3,
            ..Default::default()
        };
        let a = simulate_convergence(&cfg).unwrap();
        let b = simulate_convergence(&cfg).unwrap();
        assert_eq!(a, b);
        let bad = SimulationConfig {
            n_values: vec![200, 100],
            ..cfg
        };
        assert!(simulate_convergence(&bad).is_err());
    }
}
