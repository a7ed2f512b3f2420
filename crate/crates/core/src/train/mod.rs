//! Penalized fair training: minimize `L_n(f) + lambda * phi_n(f)` with Adam.
//!
//! Training is full batch. For UIF the adversarial neighbours are recomputed
//! against the current model every epoch (every outer iteration for CCCP).

mod active_set;
mod cccp;
mod objective;
mod select;

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cccp::{train_cccp, CccpConfig, CccpTrace, InnerSolver};
pub use objective::{penalized_objective, ObjectiveEval};
pub use select::{score_candidates, select_index, select_model, CandidateScore};

use crate::adversary::{adversarial_batch, AdversaryConfig};
use crate::constraint::{ConstraintSpec, CriterionKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{AdamConfig, AdamState, Architecture, ModelParams};
use crate::rng::{derive_seed, substream};
use crate::surrogate::{SurrogateKind, SurrogateSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Plain,
    Hyslide,
    Cccp,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(TrainMode::Plain),
            "hyslide" => Ok(TrainMode::Hyslide),
            "cccp" => Ok(TrainMode::Cccp),
            other => Err(Error::UnknownKind {
                what: "train mode",
                name: other.to_string(),
            }),
        }
    }
}

/// Model family; the input dimension comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    Mlp { hidden_width: usize },
}

impl ModelSpec {
    pub fn architecture(&self, input_dim: usize) -> Architecture {
        match *self {
            ModelSpec::Linear => Architecture::Linear { input_dim },
            ModelSpec::Mlp { hidden_width } => Architecture::Mlp {
                input_dim,
                hidden_width,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub surrogate: SurrogateSpec,
    /// When set, each restart draws `tau ~ U(lo, hi)` instead of using
    /// `surrogate.tau`.
    pub tau_range: Option<[f64; 2]>,
    pub constraint: ConstraintSpec,
    pub uif: AdversaryConfig,
    pub restarts: usize,
    pub mode: TrainMode,
    pub model: ModelSpec,
    pub cccp: CccpConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 0.05,
            lambda: 0.0,
            surrogate: SurrogateSpec {
                kind: SurrogateKind::Slide,
                tau: 0.1,
            },
            tau_range: None,
            constraint: ConstraintSpec::new(CriterionKind::Di),
            uif: AdversaryConfig::default(),
            restarts: 1,
            mode: TrainMode::Plain,
            model: ModelSpec::Linear,
            cccp: CccpConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if let Some([lo, hi]) = self.tau_range {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::InvalidConfig(format!(
                    "tau_range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if let ModelSpec::Mlp { hidden_width: 0 } = self.model {
            return Err(Error::InvalidConfig("mlp hidden_width must be > 0".into()));
        }
        if self.surrogate.kind == SurrogateKind::Indicator {
            return Err(Error::InvalidSurrogate(
                "the indicator is the target constraint, not a trainable relaxation".into(),
            ));
        }
        if self.constraint.criterion == CriterionKind::IfPairwise {
            return Err(Error::InvalidConstraint(
                "if_pairwise is a population criterion and cannot be trained on".into(),
            ));
        }
        self.surrogate.validate()?;
        self.constraint.validate()?;
        if self.constraint.criterion == CriterionKind::Uif {
            self.uif.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub epoch: usize,
    pub loss: f64,
    /// `lambda * constraint_surrogate`.
    pub penalty: f64,
    pub constraint_indicator: f64,
    pub constraint_surrogate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    #[serde(skip)]
    pub model: Option<ModelParams>,
    pub trajectory: Vec<TrajectoryRow>,
    pub seed: u64,
    pub restart: usize,
    pub tau: f64,
    pub lambda: f64,
    pub mode: TrainMode,
    pub cccp: Option<CccpTrace>,
    pub wall_clock_secs: f64,
}

impl TrainResult {
    pub fn model(&self) -> &ModelParams {
        self.model.as_ref().expect("train result holds a model")
    }
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    std::fs::write(path, trajectory_csv_string(rows)?)?;
    Ok(())
}

pub(crate) fn check_data(data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    if cfg.constraint.criterion == CriterionKind::Uif && !data.perturbable_mask().iter().any(|&m| m)
    {
        return Err(Error::NoPerturbableCoordinates);
    }
    Ok(())
}

pub(crate) fn adversarial_inputs(
    model: &ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
    round: u64,
) -> Result<Option<Matrix>> {
    if cfg.constraint.criterion != CriterionKind::Uif {
        return Ok(None);
    }
    let mask = data.perturbable_mask();
    adversarial_batch(model, &data.x, &mask, &cfg.uif, cfg.seed, round).map(Some)
}

pub(crate) fn initial_model(data: &Dataset, cfg: &TrainConfig) -> Result<ModelParams> {
    ModelParams::init(
        cfg.model.architecture(data.d()),
        derive_seed(cfg.seed, "init", 0),
    )
}

/// Adam on the penalized objective for `epochs` epochs, appending one
/// trajectory row per epoch (the state before that epoch's step).
#[allow(clippy::too_many_arguments)]
fn run_phase(
    model: &mut ModelParams,
    adam: &mut AdamState,
    data: &Dataset,
    cfg: &TrainConfig,
    surrogate: &SurrogateSpec,
    epoch_offset: usize,
    trajectory: &mut Vec<TrajectoryRow>,
    last_finite: &mut Option<usize>,
) -> Result<()> {
    for e in 0..cfg.epochs {
        let epoch = epoch_offset + e;
        let adv = adversarial_inputs(model, data, cfg, epoch as u64)?;
        let ev = penalized_objective(
            model,
            data,
            adv.as_ref(),
            cfg.lambda,
            surrogate,
            &cfg.constraint,
        )?;
        if !ev.total.is_finite() || ev.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                last_finite_epoch: *last_finite,
            });
        }
        *last_finite = Some(epoch);
        trajectory.push(ev.row(epoch, cfg.lambda));
        adam.step(model, &ev.grad)?;
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence {
            last_finite_epoch: *last_finite,
        });
    }
    Ok(())
}

/// Plain penalized training with `cfg.seed` and `cfg.surrogate`.
pub fn train_penalized(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    train_penalized_from(data, cfg, initial_model(data, cfg)?)
}

/// Plain penalized training from a given starting model.
pub fn train_penalized_from(
    data: &Dataset,
    cfg: &TrainConfig,
    mut model: ModelParams,
) -> Result<TrainResult> {
    cfg.validate()?;
    check_data(data, cfg)?;
    let start = Instant::now();
    let mut adam = AdamState::new(model.params().len(), AdamConfig::with_lr(cfg.lr));
    let mut trajectory = Vec::with_capacity(cfg.epochs);
    let mut last_finite = None;
    run_phase(
        &mut model,
        &mut adam,
        data,
        cfg,
        &cfg.surrogate,
        0,
        &mut trajectory,
        &mut last_finite,
    )?;
    Ok(TrainResult {
        model: Some(model),
        trajectory,
        seed: cfg.seed,
        restart: 0,
        tau: cfg.surrogate.tau,
        lambda: cfg.lambda,
        mode: TrainMode::Plain,
        cccp: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Hinge-penalized phase followed by a SLIDE phase warm-started from the
/// hinge solution. The optimizer state carries over, so with `lambda = 0`
/// this equals plain training for twice the epochs.
pub fn train_hyslide(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_data(data, cfg)?;
    if cfg.surrogate.kind != SurrogateKind::Slide {
        return Err(Error::InvalidSurrogate(format!(
            "hyslide needs a slide surrogate for its second phase, got {}",
            cfg.surrogate.kind
        )));
    }
    let start = Instant::now();
    let mut model = initial_model(data, cfg)?;
    let mut adam = AdamState::new(model.params().len(), AdamConfig::with_lr(cfg.lr));
    let mut trajectory = Vec::with_capacity(2 * cfg.epochs);
    let mut last_finite = None;
    run_phase(
        &mut model,
        &mut adam,
        data,
        cfg,
        &SurrogateSpec::hinge(),
        0,
        &mut trajectory,
        &mut last_finite,
    )?;
    run_phase(
        &mut model,
        &mut adam,
        data,
        cfg,
        &cfg.surrogate,
        cfg.epochs,
        &mut trajectory,
        &mut last_finite,
    )?;
    Ok(TrainResult {
        model: Some(model),
        trajectory,
        seed: cfg.seed,
        restart: 0,
        tau: cfg.surrogate.tau,
        lambda: cfg.lambda,
        mode: TrainMode::Hyslide,
        cccp: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Dispatch on `cfg.mode`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    match cfg.mode {
        TrainMode::Plain => train_penalized(data, cfg),
        TrainMode::Hyslide => train_hyslide(data, cfg),
        TrainMode::Cccp => train_cccp(data, cfg),
    }
}

/// Config of restart `r`: its own seed and, if `tau_range` is set, its own
/// `tau`.
pub fn restart_config(cfg: &TrainConfig, r: usize) -> TrainConfig {
    let mut c = cfg.clone();
    c.seed = derive_seed(cfg.seed, "restart", r as u64);
    if let Some([lo, hi]) = cfg.tau_range {
        c.surrogate.tau = substream(cfg.seed, "tau", r as u64).gen_range(lo..hi);
    }
    c
}

/// `cfg.restarts` independent runs, in parallel.
pub fn train_restarts(data: &Dataset, cfg: &TrainConfig) -> Result<Vec<TrainResult>> {
    cfg.validate()?;
    (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut res = train(data, &restart_config(cfg, r))?;
            res.restart = r;
            Ok(res)
        })
        .collect()
}

/// Restarts for every `lambda` in the grid. A failing cell is reported in
/// place instead of aborting the sweep.
pub fn train_lambda_grid(
    data: &Dataset,
    cfg: &TrainConfig,
    lambdas: &[f64],
) -> Vec<(f64, Result<Vec<TrainResult>>)> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let mut c = cfg.clone();
            c.lambda = lambda;
            (lambda, train_restarts(data, &c))
        })
        .collect()
}

/// Serialize a trajectory to CSV in memory.
pub fn trajectory_csv_string(rows: &[TrajectoryRow]) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "epoch",
            "loss",
            "penalty",
            "constraint_indicator",
            "constraint_surrogate",
        ])?;
        for r in rows {
            w.serialize((
                r.epoch,
                r.loss,
                r.penalty,
                r.constraint_indicator,
                r.constraint_surrogate,
            ))?;
        }
        w.flush()?;
    }
    String::from_utf8(buf).map_err(|e| Error::InvalidDataset(e.to_string()))
}
