//! Convex-concave procedure for SLIDE-penalized training.
//!
//! SLIDE splits as `slide(m) = (m)+/tau - (m - tau)+/tau`. Each outer
//! iteration replaces the concave part by its tangent at the current model
//! and minimizes the resulting upper bound of the penalized objective.
//!
//! - UIF: with `a_i = f(x_i) - f(v_i)` and `m_i = |a_i| - gamma`, the convex
//!   part `(|a| - gamma)+` is kept and `-(|a| - gamma - tau)+` is linearized
//!   in `a`.
//! - DI: with `P_z`, `Q_z` the group means of `(f)+/tau` and `(f - tau)+/tau`,
//!   the gap is `G - H` where `G = P_0 + Q_1` and `H = P_1 + Q_0` are convex,
//!   so `|G - H| = 2 max(G, H) - (G + H)`; the `-(G + H)` term is
//!   linearized in the scores.
//!
//! The inner solvers only accept points that do not raise the bound beyond
//! rounding error, so the true objective cannot increase between outer
//! iterations (for UIF, with the adversarial inputs held fixed).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::active_set::{self, Problem, Relu, Tag};
use super::{
    adversarial_inputs, check_data, initial_model, penalized_objective, TrainConfig, TrainMode,
    TrainResult, TrajectoryRow,
};
use crate::constraint::{group_means, CriterionKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{norm2, Matrix};
use crate::nn::{logistic_loss, AdamConfig, AdamState, Architecture, ModelParams};
use crate::surrogate::{
    slide_concave, slide_concave_grad, slide_convex, slide_convex_grad, SurrogateKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// `inner_epochs` Adam steps, keeping the best iterate.
    Adam,
    /// Proximal Newton on the exact convexified objective; linear models only.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CccpConfig {
    pub inner_epochs: usize,
    pub max_outer: usize,
    /// Stop once the relative decrease of the full objective falls below this.
    pub rel_tol: f64,
    pub solver: InnerSolver,
    /// Newton stops at this norm of the minimal subgradient.
    pub grad_tol: f64,
    pub max_newton_iters: usize,
    /// Recompute adversarial inputs between outer iterations (UIF).
    pub refresh_adversary: bool,
}

impl Default for CccpConfig {
    fn default() -> Self {
        Self {
            inner_epochs: 200,
            max_outer: 10,
            rel_tol: 1e-6,
            solver: InnerSolver::Adam,
            grad_tol: 1e-10,
            max_newton_iters: 500,
            refresh_adversary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccpTrace {
    /// Full penalized objective before the first outer iteration.
    pub initial_objective: f64,
    /// Full penalized objective after each outer iteration, evaluated on
    /// the adversarial inputs used by that iteration.
    pub objectives: Vec<f64>,
    /// Full objective at the start of each outer iteration.
    pub start_objectives: Vec<f64>,
    /// Gradient norm of the convexified objective at each inner solution.
    pub inner_grad_norms: Vec<f64>,
}

enum Majorizer {
    Uif {
        adv: Matrix,
        coef: Vec<f64>,
        konst: f64,
        gamma: f64,
        tau: f64,
    },
    Di {
        lin: Vec<f64>,
        konst: f64,
        tau: f64,
    },
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn q(f: f64, tau: f64) -> f64 {
    -slide_concave(f, tau)
}

fn dq(f: f64, tau: f64) -> f64 {
    -slide_concave_grad(f, tau)
}

impl Majorizer {
    fn build(
        model: &ModelParams,
        data: &Dataset,
        cfg: &TrainConfig,
        adv: Option<Matrix>,
    ) -> Result<Self> {
        let tau = cfg.surrogate.tau;
        let scores = model.forward(&data.x)?;
        let n = data.n() as f64;
        match cfg.constraint.criterion {
            CriterionKind::Uif => {
                let adv = adv.ok_or(Error::MissingAdversarialScores)?;
                let fv = model.forward(&adv)?;
                let gamma = cfg.constraint.gamma;
                let mut coef = Vec::with_capacity(scores.len());
                let mut konst = 0.0;
                for (f, v) in scores.iter().zip(&fv) {
                    let a = f - v;
                    let m = a.abs() - gamma;
                    let c = slide_concave_grad(m, tau) * sign(a);
                    konst += slide_concave(m, tau) - c * a;
                    coef.push(c);
                }
                Ok(Majorizer::Uif {
                    adv,
                    coef,
                    konst: konst / n,
                    gamma,
                    tau,
                })
            }
            CriterionKind::Di => {
                let batch = crate::constraint::ScoredBatch::new(&scores, &data.y, &data.z)?;
                let (p0, p1, n0, n1) = group_means(&batch, None, |f| slide_convex(f, tau))?;
                let (q0, q1, _, _) = group_means(&batch, None, |f| q(f, tau))?;
                let gh = p0 + q1 + p1 + q0;
                let lin: Vec<f64> = scores
                    .iter()
                    .zip(&data.z)
                    .map(|(&f, &z)| {
                        let nz = if z == 1 { n1 } else { n0 } as f64;
                        (slide_convex_grad(f, tau) + dq(f, tau)) / nz
                    })
                    .collect();
                let konst = -gh + lin.iter().zip(&scores).map(|(w, f)| w * f).sum::<f64>();
                Ok(Majorizer::Di { lin, konst, tau })
            }
            other => Err(Error::InvalidConstraint(format!(
                "cccp supports di and uif, got {other}"
            ))),
        }
    }

    /// Convexified objective `L_n + lambda * bound` and its gradient.
    fn value_grad(
        &self,
        model: &ModelParams,
        data: &Dataset,
        lambda: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let scores = model.forward(&data.x)?;
        let (loss, mut up) = logistic_loss(&scores, &data.y)?;
        let n = data.n() as f64;
        match self {
            Majorizer::Uif {
                adv,
                coef,
                konst,
                gamma,
                tau,
            } => {
                let fv = model.forward(adv)?;
                let mut pen = 0.0;
                let mut up_adv = vec![0.0; fv.len()];
                for i in 0..scores.len() {
                    let a = scores[i] - fv[i];
                    let m = a.abs() - gamma;
                    pen += slide_convex(m, *tau) + coef[i] * a;
                    let da = (slide_convex_grad(m, *tau) * sign(a) + coef[i]) / n;
                    up[i] += lambda * da;
                    up_adv[i] = -lambda * da;
                }
                let mut grad = model.backward(&data.x, &up)?;
                for (g, a) in grad.iter_mut().zip(model.backward(adv, &up_adv)?) {
                    *g += a;
                }
                Ok((loss + lambda * (pen / n + konst), grad))
            }
            Majorizer::Di { lin, konst, tau } => {
                let batch = crate::constraint::ScoredBatch::new(&scores, &data.y, &data.z)?;
                let (p0, p1, n0, n1) = group_means(&batch, None, |f| slide_convex(f, *tau))?;
                let (q0, q1, _, _) = group_means(&batch, None, |f| q(f, *tau))?;
                let g = p0 + q1;
                let h = p1 + q0;
                let g_active = g >= h;
                let pen = 2.0 * g.max(h) - lin.iter().zip(&scores).map(|(w, f)| w * f).sum::<f64>()
                    + konst;
                for i in 0..scores.len() {
                    let f = scores[i];
                    let nz = if data.z[i] == 1 { n1 } else { n0 } as f64;
                    // G = P_0 + Q_1, H = P_1 + Q_0.
                    let dmax = if (data.z[i] == 0) == g_active {
                        slide_convex_grad(f, *tau)
                    } else {
                        dq(f, *tau)
                    };
                    up[i] += lambda * (2.0 * dmax / nz - lin[i]);
                }
                Ok((loss + lambda * pen, model.backward(&data.x, &up)?))
            }
        }
    }
}

fn solve_adam(
    maj: &Majorizer,
    start: &ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelParams, f64, f64)> {
    let mut model = start.clone();
    let mut adam = AdamState::new(model.params().len(), AdamConfig::with_lr(cfg.lr));
    let (v0, g0) = maj.value_grad(&model, data, cfg.lambda)?;
    let mut best = (model.clone(), v0, norm2(&g0));
    let mut grad = g0;
    for _ in 0..cfg.cccp.inner_epochs {
        adam.step(&mut model, &grad)?;
        let (v, g) = maj.value_grad(&model, data, cfg.lambda)?;
        if !v.is_finite() {
            break;
        }
        if v < best.1 {
            best = (model.clone(), v, norm2(&g));
        }
        grad = g;
    }
    Ok(best)
}

impl Majorizer {
    /// The convexified objective of a linear model in the form solved by
    /// [`active_set::solve`], over `(w, b)`.
    fn piecewise(&self, data: &Dataset, lambda: f64) -> Result<Problem> {
        let n = data.n() as f64;
        let p = data.d() + 1;
        let xt: Vec<Vec<f64>> = data
            .x
            .iter_rows()
            .map(|r| {
                let mut v = r.to_vec();
                v.push(1.0);
                v
            })
            .collect();
        let y = data.y.iter().map(|&v| f64::from(v)).collect();
        let mut lin = vec![0.0; p];
        let mut relus = Vec::new();
        let (konst, mu) = match self {
            Majorizer::Uif {
                adv,
                coef,
                konst,
                gamma,
                tau,
            } => {
                for (i, x) in data.x.iter_rows().enumerate() {
                    let mut delta: Vec<f64> =
                        x.iter().zip(adv.row(i)).map(|(a, b)| a - b).collect();
                    delta.push(0.0);
                    for (l, d) in lin.iter_mut().zip(&delta) {
                        *l += coef[i] * d / n;
                    }
                    let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
                    for a in [delta, neg] {
                        relus.push(Relu {
                            a,
                            b: *gamma,
                            c: 1.0 / (n * tau),
                            tag: Tag::Base,
                        });
                    }
                }
                (*konst, 0.0)
            }
            Majorizer::Di { lin: w, konst, tau } => {
                let (n0, n1) = data.group_counts();
                for (i, x) in xt.iter().enumerate() {
                    for (l, v) in lin.iter_mut().zip(x) {
                        *l -= w[i] * v;
                    }
                    let (nz, own, other) = if data.z[i] == 0 {
                        (n0, Tag::G, Tag::H)
                    } else {
                        (n1, Tag::H, Tag::G)
                    };
                    let c = 1.0 / (nz as f64 * tau);
                    relus.push(Relu {
                        a: x.clone(),
                        b: 0.0,
                        c,
                        tag: own,
                    });
                    relus.push(Relu {
                        a: x.clone(),
                        b: *tau,
                        c,
                        tag: other,
                    });
                }
                (*konst, 2.0)
            }
        };
        Ok(Problem {
            xt,
            y,
            lin,
            konst,
            lambda,
            relus,
            mu,
        })
    }
}

fn solve_newton(
    maj: &Majorizer,
    start: &ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelParams, f64, f64)> {
    if !matches!(start.architecture(), Architecture::Linear { .. }) {
        return Err(Error::InvalidConfig(
            "the newton inner solver requires a linear model".into(),
        ));
    }
    let problem = maj.piecewise(data, cfg.lambda)?;
    let (theta, val, grad) = active_set::solve(
        &problem,
        start.params(),
        cfg.cccp.grad_tol,
        cfg.cccp.max_newton_iters,
    );
    Ok((
        ModelParams::from_flat(start.architecture(), theta)?,
        val,
        grad,
    ))
}

/// CCCP training of a SLIDE-penalized DI or UIF objective.
pub fn train_cccp(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_data(data, cfg)?;
    if cfg.surrogate.kind != SurrogateKind::Slide {
        return Err(Error::InvalidSurrogate(format!(
            "cccp needs the slide surrogate, got {}",
            cfg.surrogate.kind
        )));
    }
    if !matches!(
        cfg.constraint.criterion,
        CriterionKind::Di | CriterionKind::Uif
    ) {
        return Err(Error::InvalidConstraint(format!(
            "cccp supports di and uif, got {}",
            cfg.constraint.criterion
        )));
    }
    let start = Instant::now();
    let mut model = initial_model(data, cfg)?;
    let mut adv = adversarial_inputs(&model, data, cfg, 0)?;
    let full = |m: &ModelParams, adv: Option<&Matrix>| {
        penalized_objective(m, data, adv, cfg.lambda, &cfg.surrogate, &cfg.constraint)
    };
    let initial = full(&model, adv.as_ref())?;
    let mut trace = CccpTrace {
        initial_objective: initial.total,
        objectives: Vec::new(),
        start_objectives: Vec::new(),
        inner_grad_norms: Vec::new(),
    };
    let mut trajectory: Vec<TrajectoryRow> = Vec::new();

    for k in 0..cfg.cccp.max_outer.max(1) {
        if k > 0 && cfg.cccp.refresh_adversary {
            adv = adversarial_inputs(&model, data, cfg, k as u64)?;
        }
        let before = full(&model, adv.as_ref())?.total;
        let (next, grad_norm) = if cfg.lambda == 0.0 {
            // Nothing to convexify: one plain ERM solve.
            let mut m = model.clone();
            let mut adam = AdamState::new(m.params().len(), AdamConfig::with_lr(cfg.lr));
            for _ in 0..cfg.cccp.inner_epochs {
                let ev = full(&m, adv.as_ref())?;
                adam.step(&mut m, &ev.grad)?;
            }
            let g = norm2(&full(&m, adv.as_ref())?.grad);
            (m, g)
        } else {
            let maj = Majorizer::build(&model, data, cfg, adv.clone())?;
            let (m, _, g) = match cfg.cccp.solver {
                InnerSolver::Adam => solve_adam(&maj, &model, data, cfg)?,
                InnerSolver::Newton => solve_newton(&maj, &model, data, cfg)?,
            };
            (m, g)
        };
        let ev = full(&next, adv.as_ref())?;
        if !ev.total.is_finite() {
            return Err(Error::Divergence {
                last_finite_epoch: k.checked_sub(1),
            });
        }
        model = next;
        trace.start_objectives.push(before);
        trace.objectives.push(ev.total);
        trace.inner_grad_norms.push(grad_norm);
        trajectory.push(ev.row(k, cfg.lambda));
        let rel = (before - ev.total) / before.abs().max(f64::MIN_POSITIVE);
        if cfg.lambda == 0.0 || rel < cfg.cccp.rel_tol {
            break;
        }
    }
    Ok(TrainResult {
        model: Some(model),
        trajectory,
        seed: cfg.seed,
        restart: 0,
        tau: cfg.surrogate.tau,
        lambda: cfg.lambda,
        mode: TrainMode::Cccp,
        cccp: Some(trace),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
