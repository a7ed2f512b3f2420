//! Feasible-set geometry on parameter grids: Hausdorff gaps between the
//! indicator and surrogate feasible sets, the closed-form 1-D Gaussian
//! example and the convergence simulation.

mod analytic;
mod convergence;

pub use analytic::{analytic_1d_gaussian, analytic_gap_curve, BETA_FLOOR};
pub use convergence::{
    constrained_optimum, gauss_hermite, simulate_convergence, write_convergence_csv,
    ConvergenceRow, Population, SimulationConfig,
};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintSpec, CriterionKind, McSample};
use crate::data::{SynthKind, SynthSpec};
use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::surrogate::SurrogateSpec;

/// A regular 2-D grid of cell centers over `[lo, hi]` per axis. Node `k`
/// sits at row `k / res[1]`, column `k % res[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub res: [usize; 2],
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self::square(-2.0, 2.0, 50)
    }
}

impl ParamGrid {
    pub fn new(lo: [f64; 2], hi: [f64; 2], res: [usize; 2]) -> Result<Self> {
        let g = Self { lo, hi, res };
        g.validate()?;
        Ok(g)
    }

    pub fn square(lo: f64, hi: f64, res: usize) -> Self {
        Self {
            lo: [lo, lo],
            hi: [hi, hi],
            res: [res, res],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..2 {
            if self.res[a] < 2 {
                return Err(Error::InvalidConfig(format!(
                    "grid resolution must be >= 2 per axis, got {}",
                    self.res[a]
                )));
            }
            if self.lo[a].is_nan() || self.hi[a].is_nan() || self.lo[a] >= self.hi[a] {
                return Err(Error::InvalidConfig(format!(
                    "grid range must satisfy lo < hi on axis {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.res[0] * self.res[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 2] {
        [0, 1].map(|a| (self.hi[a] - self.lo[a]) / self.res[a] as f64)
    }

    pub fn node(&self, k: usize) -> [f64; 2] {
        let h = self.spacing();
        let (i, j) = (k / self.res[1], k % self.res[1]);
        [
            self.lo[0] + (i as f64 + 0.5) * h[0],
            self.lo[1] + (j as f64 + 0.5) * h[1],
        ]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }
}

/// Population constraint of every no-intercept linear score `f(x) = b . x`
/// with `b` a grid node, one vector per surrogate, on common MC draws.
pub fn evaluate_grid(
    grid: &ParamGrid,
    sample: &McSample,
    spec: &ConstraintSpec,
    surrogates: &[SurrogateSpec],
) -> Result<Vec<Vec<f64>>> {
    grid.validate()?;
    let per_node: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let model = ModelParams::linear(&grid.node(k), 0.0);
            surrogates
                .iter()
                .map(|s| sample.estimate(&model, spec, s).value)
                .collect()
        })
        .collect();
    Ok((0..surrogates.len())
        .map(|s| per_node.iter().map(|v| v[s]).collect())
        .collect())
}

/// Mask of nodes with `values <= alpha`.
pub fn feasible_set(values: &[f64], alpha: f64) -> Vec<bool> {
    values.iter().map(|&v| v <= alpha).collect()
}

/// Exact Hausdorff distance between two finite point sets.
pub fn hausdorff<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = |p: &[f64], q: &[f64]| -> f64 {
        p.iter()
            .zip(q)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let directed = |from: &[P], to: &[P]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| d(p.as_ref(), q.as_ref()))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Squared distance along one line to the nearest zero of `f` (which holds
/// 0 or +inf), by the lower envelope of parabolas.
fn edt_line(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if finite.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let key = |q: usize| f[q] + (h * q as f64).powi(2);
    let mut v = vec![finite[0]];
    let mut z = vec![f64::NEG_INFINITY, f64::INFINITY];
    for &q in &finite[1..] {
        loop {
            let p = *v.last().expect("non-empty");
            let s = (key(q) - key(p)) / (2.0 * h * h * (q - p) as f64);
            if s <= z[v.len() - 1] && v.len() > 1 {
                v.pop();
                z.pop();
                continue;
            }
            *z.last_mut().expect("non-empty") = s;
            v.push(q);
            z.push(f64::INFINITY);
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        *o = (h * (q as f64 - v[k] as f64)).powi(2) + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every node to the nearest node of
/// `mask`.
pub fn distance_transform(grid: &ParamGrid, mask: &[bool]) -> Vec<f64> {
    let [r, c] = grid.res;
    let h = grid.spacing();
    let mut tmp = vec![0.0; r * c];
    let mut line = vec![0.0; c];
    for i in 0..r {
        let f: Vec<f64> = (0..c)
            .map(|j| if mask[i * c + j] { 0.0 } else { f64::INFINITY })
            .collect();
        edt_line(&f, h[1], &mut line);
        tmp[i * c..(i + 1) * c].copy_from_slice(&line);
    }
    let mut out = vec![0.0; r * c];
    let mut col = vec![0.0; r];
    for j in 0..c {
        let f: Vec<f64> = (0..r).map(|i| tmp[i * c + j]).collect();
        edt_line(&f, h[0], &mut col);
        for i in 0..r {
            out[i * c + j] = col[i];
        }
    }
    out
}

fn directed_from_dt(from: &[bool], dt_to: &[f64]) -> f64 {
    from.iter()
        .zip(dt_to)
        .filter(|(m, _)| **m)
        .map(|(_, d)| *d)
        .fold(0.0, f64::max)
        .sqrt()
}

/// Hausdorff distance between two node masks of `grid`.
pub fn hausdorff_grid(grid: &ParamGrid, a: &[bool], b: &[bool]) -> Result<f64> {
    if !a.contains(&true) || !b.contains(&true) {
        return Err(Error::EmptySet);
    }
    let da = distance_transform(grid, a);
    let db = distance_transform(grid, b);
    Ok(directed_from_dt(a, &db).max(directed_from_dt(b, &da)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub name: String,
    /// `None` where the indicator feasible set is empty.
    pub d: Vec<Option<f64>>,
    /// Minimizing surrogate level `alpha'` per point.
    pub alpha_prime: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub alphas: Vec<f64>,
    pub series: Vec<GapSeries>,
}

impl GapCurve {
    pub fn series(&self, name: &str) -> Option<&GapSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Columns `alpha, d_<series>...`; absent values are empty fields.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["alpha".to_string()];
        header.extend(self.series.iter().map(|s| format!("d_{}", s.name)));
        w.write_record(&header)?;
        for (i, a) in self.alphas.iter().enumerate() {
            let mut rec = vec![format!("{a:?}")];
            rec.extend(
                self.series
                    .iter()
                    .map(|s| s.d[i].map(|v| format!("{v:?}")).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Series name for a surrogate: `hinge`, `slide_tau01` for tau 0.1, ...
pub fn series_name(s: &SurrogateSpec) -> String {
    if s.kind.uses_tau() {
        format!(
            "{}_tau{}",
            s.kind.name(),
            format!("{}", s.tau).replace('.', "")
        )
    } else {
        s.kind.name().to_string()
    }
}

/// `d_alpha = min_{alpha'} D_H({phi <= alpha}, {phi_s <= alpha'})` for each
/// surrogate field, with `alpha'` searched over `n_alpha_prime` equispaced
/// levels spanning `[0, max finite phi_s]` plus `alpha` itself.
pub fn gap_curve(
    grid: &ParamGrid,
    indicator: &[f64],
    surrogates: &[(String, Vec<f64>)],
    alphas: &[f64],
    n_alpha_prime: usize,
) -> Result<GapCurve> {
    grid.validate()?;
    if n_alpha_prime < 2 {
        return Err(Error::InvalidConfig("alpha' grid needs >= 2 levels".into()));
    }
    for (_, v) in surrogates
        .iter()
        .chain(std::iter::once(&(String::new(), indicator.to_vec())))
    {
        if v.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "grid values",
                expected: grid.len(),
                actual: v.len(),
            });
        }
    }
    let a_sets: Vec<Option<(Vec<bool>, Vec<f64>)>> = alphas
        .iter()
        .map(|&a| {
            let m = feasible_set(indicator, a);
            if m.contains(&true) {
                let dt = distance_transform(grid, &m);
                Some((m, dt))
            } else {
                log::warn!("indicator feasible set empty at alpha {a}");
                None
            }
        })
        .collect();
    let series = surrogates
        .iter()
        .map(|(name, vals)| {
            let vmax = vals
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max);
            let levels: Vec<f64> = (0..n_alpha_prime)
                .map(|k| vmax * k as f64 / (n_alpha_prime - 1) as f64)
                .collect();
            let cands: Vec<(f64, Vec<bool>, Vec<f64>)> = levels
                .par_iter()
                .filter_map(|&q| {
                    let m = feasible_set(vals, q);
                    m.contains(&true).then(|| {
                        let dt = distance_transform(grid, &m);
                        (q, m, dt)
                    })
                })
                .collect();
            let mut d = Vec::with_capacity(alphas.len());
            let mut ap = Vec::with_capacity(alphas.len());
            for (&alpha, aset) in alphas.iter().zip(&a_sets) {
                let Some((am, adt)) = aset else {
                    d.push(None);
                    ap.push(None);
                    continue;
                };
                let extra = {
                    let m = feasible_set(vals, alpha);
                    m.contains(&true).then(|| {
                        let dt = distance_transform(grid, &m);
                        (alpha, m, dt)
                    })
                };
                let best = cands
                    .iter()
                    .chain(extra.as_ref())
                    .map(|(q, bm, bdt)| {
                        (directed_from_dt(am, bdt).max(directed_from_dt(bm, adt)), *q)
                    })
                    .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
                d.push(best.map(|b| b.0));
                ap.push(best.map(|b| b.1));
            }
            GapSeries {
                name: name.clone(),
                d,
                alpha_prime: ap,
            }
        })
        .collect();
    Ok(GapCurve {
        alphas: alphas.to_vec(),
        series,
    })
}

/// The pairwise-fairness toy: a 2-D synthetic law, IF_pairwise with
/// margin `gamma`, no-intercept linear scores on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub dataset: SynthKind,
    pub grid: ParamGrid,
    pub n_mc: usize,
    pub gamma: f64,
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub n_alpha_prime: usize,
    pub seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            dataset: SynthKind::GaussianMixture2d,
            grid: ParamGrid::default(),
            n_mc: 10_000,
            gamma: 0.3,
            alphas: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30],
            taus: vec![0.01, 0.1],
            n_alpha_prime: 201,
            seed: 0,
        }
    }
}

impl GeometryConfig {
    /// The 200x200 grid instead of the 50x50 default.
    pub fn full_resolution(mut self) -> Self {
        self.grid.res = [200, 200];
        self
    }
}

/// Named surrogate field over the grid.
pub type NamedField = (String, Vec<f64>);

/// Indicator values and one field per hinge / SLIDE(tau) surrogate.
pub fn toy_fields(cfg: &GeometryConfig) -> Result<(Vec<f64>, Vec<NamedField>)> {
    let law = SynthSpec::default_for(cfg.dataset);
    if law.sampler().dim() != 2 {
        return Err(Error::InvalidConfig(format!(
            "geometry toy needs a 2-D law, {} has dimension {}",
            cfg.dataset,
            law.sampler().dim()
        )));
    }
    let spec = ConstraintSpec::new(CriterionKind::IfPairwise).with_gamma(cfg.gamma);
    spec.validate()?;
    let mut surrogates = vec![SurrogateSpec::indicator(), SurrogateSpec::hinge()];
    for &t in &cfg.taus {
        surrogates.push(SurrogateSpec::slide(t)?);
    }
    let sample = McSample::draw(law.sampler(), spec.criterion, cfg.n_mc, cfg.seed)?;
    let mut fields = evaluate_grid(&cfg.grid, &sample, &spec, &surrogates)?;
    let ind = fields.remove(0);
    let named = surrogates[1..]
        .iter()
        .map(series_name)
        .zip(fields)
        .collect();
    Ok((ind, named))
}

pub fn toy_gap_curve(cfg: &GeometryConfig) -> Result<GapCurve> {
    let (ind, fields) = toy_fields(cfg)?;
    gap_curve(&cfg.grid, &ind, &fields, &cfg.alphas, cfg.n_alpha_prime)
}
