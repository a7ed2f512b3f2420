//! Test-time metrics, the `M_nf` surrogate-validity diagnostic and Pareto
//! sweeps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{adversarial_batch, AdversaryConfig};
use crate::constraint::{
    empirical_constraint, empirical_uif, group_means, ConstraintSpec, CriterionKind, ScoredBatch,
};
use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{ModelParams, ScoreModel};
use crate::surrogate::{indicator, SurrogateSpec};
use crate::train::{train_lambda_grid, TrainConfig};

fn predictions(model: &ModelParams, x: &Matrix) -> Result<Vec<i8>> {
    Ok(model
        .forward(x)?
        .into_iter()
        .map(|f| if f > 0.0 { 1 } else { -1 })
        .collect())
}

/// Percent of rows with `sign(f) = y`, ties at zero counted negative.
pub fn accuracy(model: &ModelParams, data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::InvalidDataset("accuracy of an empty dataset".into()));
    }
    let p = predictions(model, &data.x)?;
    let hits = p.iter().zip(&data.y).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / data.n() as f64)
}

/// Mean of the per-class accuracies in percent; `None` when a class is absent.
pub fn balanced_accuracy(model: &ModelParams, data: &Dataset) -> Result<Option<f64>> {
    let p = predictions(model, &data.x)?;
    let mut hit = [0usize; 2];
    let mut tot = [0usize; 2];
    for (pi, yi) in p.iter().zip(&data.y) {
        let c = usize::from(*yi == 1);
        tot[c] += 1;
        hit[c] += usize::from(pi == yi);
    }
    if tot.contains(&0) {
        return Ok(None);
    }
    Ok(Some(
        50.0 * (hit[0] as f64 / tot[0] as f64 + hit[1] as f64 / tot[1] as f64),
    ))
}

/// Exact empirical constraint under the indicator. UIF uses adversarial
/// neighbours computed against `model`.
pub fn indicator_constraint(
    model: &ModelParams,
    data: &Dataset,
    spec: &ConstraintSpec,
    adversary: &AdversaryConfig,
    seed: u64,
) -> Result<f64> {
    let scores = model.forward(&data.x)?;
    let batch = ScoredBatch::new(&scores, &data.y, &data.z)?;
    let ind = SurrogateSpec::indicator();
    if spec.criterion == CriterionKind::Uif {
        let adv = adversarial_batch(model, &data.x, &data.perturbable_mask(), adversary, seed, 0)?;
        let adv_scores = model.forward(&adv)?;
        return Ok(empirical_uif(&batch.with_adversarial(&adv_scores)?, spec.gamma, &ind)?.value);
    }
    Ok(empirical_constraint(&batch, spec, &ind)?.value)
}

/// Resolve flip columns to one-hot groups: column indices and levels.
fn flip_groups(data: &Dataset, flip_columns: &[String]) -> Result<Vec<Vec<usize>>> {
    let groups = data.one_hot_groups();
    flip_columns
        .iter()
        .map(|name| {
            if let Some(idx) = groups.get(name) {
                return Ok(idx.clone());
            }
            match data
                .columns
                .iter()
                .find(|c| &c.name == name || &c.source == name)
            {
                Some(c) if c.kind == ColumnKind::Continuous => {
                    Err(Error::NotCategorical(name.clone()))
                }
                Some(c) => Ok(groups[&c.source].clone()),
                None => Err(Error::UnknownColumn(name.clone())),
            }
        })
        .collect()
}

/// Fraction of rows whose predicted class is the same for every joint
/// setting of the flipped one-hot groups.
pub fn consistency(model: &ModelParams, data: &Dataset, flip_columns: &[String]) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::InvalidDataset(
            "consistency of an empty dataset".into(),
        ));
    }
    let groups = flip_groups(data, flip_columns)?;
    let combos: usize = groups.iter().map(Vec::len).product();
    let mut consistent = 0usize;
    let mut row = vec![0.0; data.d()];
    for i in 0..data.n() {
        row.copy_from_slice(data.x.row(i));
        let mut first: Option<bool> = None;
        let mut same = true;
        for c in 0..combos {
            let mut k = c;
            for g in &groups {
                let pick = k % g.len();
                k /= g.len();
                for (l, &j) in g.iter().enumerate() {
                    row[j] = if l == pick { 1.0 } else { 0.0 };
                }
            }
            let pos = model.score(&row) > 0.0;
            match first {
                None => first = Some(pos),
                Some(p) if p != pos => {
                    same = false;
                    break;
                }
                _ => {}
            }
        }
        consistent += usize::from(same);
    }
    Ok(consistent as f64 / data.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnfReport {
    pub tau: f64,
    pub m_nf: f64,
    /// `m_nf * tau / phi_n`; infinite (written as `null`) when `phi_n = 0`.
    pub m_ratio: f64,
    pub verdict: Verdict,
    pub threshold: f64,
    /// Indicator constraint `phi_n`.
    pub phi: f64,
    pub phi_slide: f64,
    pub phi_opposite: f64,
}

/// Absolute floor on `m_nf * tau` used when `phi_n = 0`.
pub const MNF_ZERO_FLOOR: f64 = 1e-3;

/// The `M_nf` diagnostic for DI or UIF.
///
/// - UIF: `|phi_{n,-tau} - phi_{n,tau}| / tau`.
/// - DI: `sum_z |avg_z(opp) - avg_z(slide)| / tau + |phi_{n,tau} - phi_n| / tau`.
///
/// The verdict is `abort` when `m_nf * tau` exceeds `threshold * phi_n`.
pub fn mnf_diagnostic(
    model: &ModelParams,
    data: &Dataset,
    spec: &ConstraintSpec,
    tau: f64,
    adversary: &AdversaryConfig,
    seed: u64,
    threshold: f64,
) -> Result<MnfReport> {
    let slide = SurrogateSpec::slide(tau)?;
    let opp = SurrogateSpec::opposite_slide(tau)?;
    let ind = SurrogateSpec::indicator();
    let scores = model.forward(&data.x)?;
    let batch = ScoredBatch::new(&scores, &data.y, &data.z)?;
    let (phi, phi_slide, phi_opposite, m_nf) = match spec.criterion {
        CriterionKind::Uif => {
            let adv =
                adversarial_batch(model, &data.x, &data.perturbable_mask(), adversary, seed, 0)?;
            let adv_scores = model.forward(&adv)?;
            let b = batch.with_adversarial(&adv_scores)?;
            let phi = empirical_uif(&b, spec.gamma, &ind)?.value;
            let ps = empirical_uif(&b, spec.gamma, &slide)?.value;
            let po = empirical_uif(&b, spec.gamma, &opp)?.value;
            (phi, ps, po, (po - ps).abs() / tau)
        }
        CriterionKind::Di => {
            let (s0, s1, _, _) = group_means(&batch, None, |f| slide.value(f))?;
            let (o0, o1, _, _) = group_means(&batch, None, |f| opp.value(f))?;
            let (i0, i1, _, _) = group_means(&batch, None, indicator)?;
            let phi = (i0 - i1).abs();
            let ps = (s0 - s1).abs();
            let po = (o0 - o1).abs();
            let m = ((o0 - s0).abs() + (o1 - s1).abs()) / tau + (ps - phi).abs() / tau;
            (phi, ps, po, m)
        }
        other => {
            return Err(Error::InvalidConstraint(format!(
                "the M_nf diagnostic covers di and uif, got {other}"
            )))
        }
    };
    let scaled = m_nf * tau;
    let (m_ratio, verdict) = if phi == 0.0 {
        let v = if scaled <= MNF_ZERO_FLOOR {
            Verdict::Keep
        } else {
            Verdict::Abort
        };
        (f64::INFINITY, v)
    } else {
        let r = scaled / phi;
        (
            r,
            if r > threshold {
                Verdict::Abort
            } else {
                Verdict::Keep
            },
        )
    };
    Ok(MnfReport {
        tau,
        m_nf,
        m_ratio,
        verdict,
        threshold,
        phi,
        phi_slide,
        phi_opposite,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// One-hot source columns flipped for the main consistency value.
    pub flip_columns: Vec<String>,
    /// Additional named consistency variants, e.g. `"s_con" -> ["relationship"]`.
    pub extra_consistency: BTreeMap<String, Vec<String>>,
    /// Run the `M_nf` diagnostic at this `tau`.
    pub mnf_tau: Option<f64>,
    pub mnf_threshold: f64,
    pub adversary: AdversaryConfig,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            flip_columns: Vec::new(),
            extra_consistency: BTreeMap::new(),
            mnf_tau: None,
            mnf_threshold: 0.10,
            adversary: AdversaryConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub balanced_accuracy: Option<f64>,
    /// Indicator DI; `None` when a group is empty.
    pub di: Option<f64>,
    pub criterion: CriterionKind,
    /// Indicator value of the configured criterion.
    pub constraint: f64,
    pub consistency: Option<f64>,
    pub extra_consistency: BTreeMap<String, f64>,
    pub mnf: Option<MnfReport>,
    pub metadata: BTreeMap<String, String>,
}

pub fn evaluate(
    model: &ModelParams,
    test: &Dataset,
    spec: &ConstraintSpec,
    opts: &EvalOptions,
) -> Result<FairnessReport> {
    let di_spec = ConstraintSpec::new(CriterionKind::Di);
    let di = match indicator_constraint(model, test, &di_spec, &opts.adversary, opts.seed) {
        Ok(v) => Some(v),
        Err(Error::EmptyCell { .. }) => None,
        Err(e) => return Err(e),
    };
    let con = if opts.flip_columns.is_empty() {
        None
    } else {
        Some(consistency(model, test, &opts.flip_columns)?)
    };
    let extra_consistency = opts
        .extra_consistency
        .iter()
        .map(|(k, cols)| Ok((k.clone(), consistency(model, test, cols)?)))
        .collect::<Result<_>>()?;
    let mnf = opts
        .mnf_tau
        .map(|tau| {
            mnf_diagnostic(
                model,
                test,
                spec,
                tau,
                &opts.adversary,
                opts.seed,
                opts.mnf_threshold,
            )
        })
        .transpose()?;
    let mut metadata = BTreeMap::new();
    metadata.insert("provenance".to_string(), test.provenance.clone());
    metadata.insert("n".to_string(), test.n().to_string());
    metadata.insert("version".to_string(), env!("CARGO_PKG_VERSION").to_string());
    Ok(FairnessReport {
        accuracy: accuracy(model, test)?,
        balanced_accuracy: balanced_accuracy(model, test)?,
        di,
        criterion: spec.criterion,
        constraint: indicator_constraint(model, test, spec, &opts.adversary, opts.seed)?,
        consistency: con,
        extra_consistency,
        mnf,
        metadata,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub acc_mean: f64,
    pub acc_se: f64,
    /// Mean violation (indicator constraint); lower is better.
    pub fairness_mean: f64,
    pub fairness_se: f64,
    pub dominated: bool,
    pub n_models: usize,
    /// Set when training failed for this cell.
    pub error: Option<String>,
}

/// `dominated[i]` is true when some other point has accuracy at least as
/// high and violation at most as large, with one of them strict.
pub fn dominated_flags(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[a].1.total_cmp(&points[b].1))
    });
    let mut out = vec![false; points.len()];
    let mut best_higher = f64::INFINITY;
    let mut k = 0;
    while k < order.len() {
        let acc = points[order[k]].0;
        let mut end = k;
        while end < order.len() && points[order[end]].0 == acc {
            end += 1;
        }
        let group_min = points[order[k]].1;
        for &i in &order[k..end] {
            let v = points[i].1;
            out[i] = best_higher <= v || group_min < v;
        }
        best_higher = best_higher.min(group_min);
        k = end;
    }
    out
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Train `cfg.restarts` models per `lambda`, average test accuracy and
/// violation per cell, and flag dominated cells. Output is sorted by lambda.
pub fn pareto_sweep(
    train: &Dataset,
    test: &Dataset,
    lambdas: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<ParetoPoint>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    cfg.validate()?;
    let mut points: Vec<ParetoPoint> = train_lambda_grid(train, cfg, lambdas)
        .into_iter()
        .map(|(lambda, res)| {
            let eval = res.and_then(|runs| {
                let mut acc = Vec::new();
                let mut fair = Vec::new();
                for r in &runs {
                    acc.push(accuracy(r.model(), test)?);
                    fair.push(indicator_constraint(
                        r.model(),
                        test,
                        &cfg.constraint,
                        &cfg.uif,
                        cfg.seed,
                    )?);
                }
                Ok((acc, fair))
            });
            match eval {
                Ok((acc, fair)) => {
                    let (am, ase) = mean_se(&acc);
                    let (fm, fse) = mean_se(&fair);
                    ParetoPoint {
                        lambda,
                        acc_mean: am,
                        acc_se: ase,
                        fairness_mean: fm,
                        fairness_se: fse,
                        dominated: false,
                        n_models: acc.len(),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("lambda {lambda}: {e}");
                    ParetoPoint {
                        lambda,
                        acc_mean: f64::NAN,
                        acc_se: f64::NAN,
                        fairness_mean: f64::NAN,
                        fairness_se: f64::NAN,
                        dominated: false,
                        n_models: 0,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let ok: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].error.is_none())
        .collect();
    let flags = dominated_flags(
        &ok.iter()
            .map(|&i| (points[i].acc_mean, points[i].fairness_mean))
            .collect::<Vec<_>>(),
    );
    for (&i, f) in ok.iter().zip(flags) {
        points[i].dominated = f;
    }
    Ok(points)
}

pub fn write_pareto_csv(path: &Path, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "lambda",
        "acc_mean",
        "acc_se",
        "fairness_mean",
        "fairness_se",
        "dominated",
    ])?;
    for p in points {
        w.serialize((
            p.lambda,
            p.acc_mean,
            p.acc_se,
            p.fairness_mean,
            p.fairness_se,
            p.dominated,
        ))?;
    }
    w.flush()?;
    Ok(())
}
