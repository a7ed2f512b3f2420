//! Linear models and single-hidden-layer ReLU networks with exact gradients,
//! the logistic loss, and Adam with a step-decay learning rate.
//!
//! A model produces one real score per input; `score > 0` is the positive
//! class. Binary softmax over two logits is the same model family as a single
//! logit under the logistic loss, so only the single-score head exists here.
//!
//! Parameters live in one flat buffer:
//!
//! - linear(d): `[w_0 .. w_{d-1}, b]`
//! - mlp(d, h): `[W1 (h x d, row-major), b1 (h), w2 (h), b2]`

use std::path::Path;

use rand::Rng as _;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::Rng;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear {
        input_dim: usize,
    },
    Mlp {
        input_dim: usize,
        hidden_width: usize,
    },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match *self {
            Architecture::Linear { input_dim } | Architecture::Mlp { input_dim, .. } => input_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        match *self {
            Architecture::Linear { input_dim } => input_dim + 1,
            Architecture::Mlp {
                input_dim,
                hidden_width,
            } => hidden_width * input_dim + 2 * hidden_width + 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Architecture::Mlp {
            hidden_width: 0, ..
        } = self
        {
            return Err(Error::InvalidConfig("mlp hidden_width must be > 0".into()));
        }
        Ok(())
    }
}

/// Anything that maps an input vector to a differentiable real score.
pub trait ScoreModel: Sync {
    fn input_dim(&self) -> usize;
    fn score(&self, x: &[f64]) -> f64;
    /// Gradient of the score with respect to the input.
    fn input_grad(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    params: Vec<f64>,
    seed: Option<u64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            params: vec![0.0; arch.num_params()],
            seed: None,
        })
    }

    /// Uniform(-a, a) weights with `a = sqrt(6 / (fan_in + fan_out))` per
    /// layer; biases start at zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        model.seed = Some(seed);
        let mut rng = Rng::seed_from_u64(seed);
        match arch {
            Architecture::Linear { input_dim } => {
                let a = (6.0 / (input_dim as f64 + 1.0)).sqrt();
                for w in &mut model.params[..input_dim] {
                    *w = rng.gen_range(-a..a);
                }
            }
            Architecture::Mlp {
                input_dim,
                hidden_width,
            } => {
                let a1 = (6.0 / (input_dim + hidden_width) as f64).sqrt();
                let a2 = (6.0 / (hidden_width as f64 + 1.0)).sqrt();
                let (w1, rest) = model.params.split_at_mut(hidden_width * input_dim);
                for w in w1 {
                    *w = rng.gen_range(-a1..a1);
                }
                for w in &mut rest[hidden_width..2 * hidden_width] {
                    *w = rng.gen_range(-a2..a2);
                }
            }
        }
        Ok(model)
    }

    /// Linear model `<w, x> + b`.
    pub fn linear(weights: &[f64], bias: f64) -> Self {
        let mut params = weights.to_vec();
        params.push(bias);
        Self {
            arch: Architecture::Linear {
                input_dim: weights.len(),
            },
            params,
            seed: None,
        }
    }

    pub fn from_flat(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: arch.num_params(),
                actual: params.len(),
            });
        }
        Ok(Self {
            arch,
            params,
            seed: None,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Human-readable name of flat parameter `idx`.
    pub fn param_name(&self, idx: usize) -> String {
        match self.arch {
            Architecture::Linear { input_dim } => {
                if idx < input_dim {
                    format!("weight[{idx}]")
                } else {
                    "bias".to_string()
                }
            }
            Architecture::Mlp {
                input_dim: d,
                hidden_width: h,
            } => {
                if idx < h * d {
                    format!("hidden.weight[{},{}]", idx / d, idx % d)
                } else if idx < h * d + h {
                    format!("hidden.bias[{}]", idx - h * d)
                } else if idx < h * d + 2 * h {
                    format!("output.weight[{}]", idx - h * d - h)
                } else {
                    "output.bias".to_string()
                }
            }
        }
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        let d = self.arch.input_dim();
        if x.cols() != d {
            return Err(Error::DimensionMismatch {
                context: "model input",
                expected: d,
                actual: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..x.rows()).map(|i| self.score(x.row(i))).collect())
    }

    /// Gradient of `sum_i upstream[i] * f(x_i)` with respect to every
    /// parameter. Rows are processed in fixed-size chunks whose partial sums
    /// are added in order, so the result does not depend on thread count.
    pub fn backward(&self, x: &Matrix, upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if upstream.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient",
                expected: x.rows(),
                actual: upstream.len(),
            });
        }
        let idx: Vec<usize> = (0..x.rows()).collect();
        let partials: Vec<Vec<f64>> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; self.params.len()];
                for &i in chunk {
                    self.accumulate_grad(x.row(i), upstream[i], &mut g);
                }
                g
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        for p in partials {
            for (a, b) in grad.iter_mut().zip(p) {
                *a += b;
            }
        }
        Ok(grad)
    }

    fn accumulate_grad(&self, x: &[f64], g: f64, out: &mut [f64]) {
        if g == 0.0 {
            return;
        }
        match self.arch {
            Architecture::Linear { input_dim } => {
                for (o, xi) in out[..input_dim].iter_mut().zip(x) {
                    *o += g * xi;
                }
                out[input_dim] += g;
            }
            Architecture::Mlp {
                input_dim: d,
                hidden_width: h,
            } => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let w2 = &rest[..h];
                for i in 0..h {
                    let pre = b1[i] + dot(&w1[i * d..(i + 1) * d], x);
                    if pre > 0.0 {
                        out[h * d + h + i] += g * pre;
                        let delta = g * w2[i];
                        out[h * d + i] += delta;
                        for (o, xj) in out[i * d..(i + 1) * d].iter_mut().zip(x) {
                            *o += delta * xj;
                        }
                    }
                }
                out[h * d + 2 * h] += g;
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let layers = match self.arch {
            Architecture::Linear { input_dim } => vec![
                LayerDump::new("weight", 1, input_dim, &self.params[..input_dim]),
                LayerDump::new("bias", 1, 1, &self.params[input_dim..]),
            ],
            Architecture::Mlp {
                input_dim: d,
                hidden_width: h,
            } => vec![
                LayerDump::new("hidden.weight", h, d, &self.params[..h * d]),
                LayerDump::new("hidden.bias", h, 1, &self.params[h * d..h * d + h]),
                LayerDump::new(
                    "output.weight",
                    1,
                    h,
                    &self.params[h * d + h..h * d + 2 * h],
                ),
                LayerDump::new("output.bias", 1, 1, &self.params[h * d + 2 * h..]),
            ],
        };
        Checkpoint {
            architecture: self.arch,
            layers,
            seed: self.seed,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut params = Vec::with_capacity(ck.architecture.num_params());
        for layer in &ck.layers {
            if layer.values.len() != layer.rows * layer.cols {
                return Err(Error::DimensionMismatch {
                    context: "checkpoint layer",
                    expected: layer.rows * layer.cols,
                    actual: layer.values.len(),
                });
            }
            if layer.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint layer `{}` holds non-finite weights",
                    layer.name
                )));
            }
            params.extend_from_slice(&layer.values);
        }
        let mut model = Self::from_flat(ck.architecture, params)?;
        model.seed = ck.seed;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl ScoreModel for ModelParams {
    fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arch.input_dim());
        match self.arch {
            Architecture::Linear { input_dim } => {
                dot(&self.params[..input_dim], x) + self.params[input_dim]
            }
            Architecture::Mlp {
                input_dim: d,
                hidden_width: h,
            } => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut out = b2[0];
                for i in 0..h {
                    let pre = b1[i] + dot(&w1[i * d..(i + 1) * d], x);
                    if pre > 0.0 {
                        out += w2[i] * pre;
                    }
                }
                out
            }
        }
    }

    fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        match self.arch {
            Architecture::Linear { input_dim } => self.params[..input_dim].to_vec(),
            Architecture::Mlp {
                input_dim: d,
                hidden_width: h,
            } => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let w2 = &rest[..h];
                let mut g = vec![0.0; d];
                for i in 0..h {
                    let row = &w1[i * d..(i + 1) * d];
                    if b1[i] + dot(row, x) > 0.0 {
                        for (gj, wj) in g.iter_mut().zip(row) {
                            *gj += w2[i] * wj;
                        }
                    }
                }
                g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDump {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl LayerDump {
    fn new(name: &str, rows: usize, cols: usize, values: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
            values: values.to_vec(),
        }
    }
}

/// On-disk model format. Floats are written in shortest round-trip decimal
/// form and parsed exactly, so save/load is bit-exact for finite weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub layers: Vec<LayerDump>,
    pub seed: Option<u64>,
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn check_labels(y: &[i8]) -> Result<()> {
    if let Some((row, &v)) = y.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
        return Err(Error::InvalidLabel {
            row,
            value: f64::from(v),
        });
    }
    Ok(())
}

/// Mean logistic loss `(1/n) sum log(1 + exp(-y f))` and its per-sample
/// derivative with respect to the score.
pub fn logistic_loss(scores: &[f64], y: &[i8]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: scores.len(),
            actual: y.len(),
        });
    }
    check_labels(y)?;
    let n = scores.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(y)
        .map(|(&f, &yi)| {
            let yf = f64::from(yi) * f;
            loss += softplus(-yf);
            -f64::from(yi) * sigmoid(-yf) / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every`
    /// steps.
    pub decay_every: u64,
    pub decay_factor: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_every: 500,
            decay_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate used for step number `step` (0-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        let halvings = step / self.config.decay_every.max(1);
        self.config.lr
            * self
                .config
                .decay_factor
                .powi(halvings.min(i32::MAX as u64) as i32)
    }

    pub fn step(&mut self, model: &mut ModelParams, grads: &[f64]) -> Result<()> {
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: model.param_name(i),
            });
        }
        self.step_slice(&mut model.params, grads)
    }

    /// Adam update on a raw parameter slice.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "adam gradient",
                expected: self.m.len(),
                actual: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: format!("param[{i}]"),
            });
        }
        let c = self.config;
        let lr = self.lr_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_forward_is_dot_plus_bias() {
        let m = ModelParams::linear(&[1.0, -1.0], 0.0);
        let x = Matrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), vec![2.0]);
    }

    #[test]
    fn zero_mlp_scores_zero() {
        let m = ModelParams::zeros(Architecture::Mlp {
            input_dim: 3,
            hidden_width: 4,
        })
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 5.0], vec![0.3, 0.3, 0.3]]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = ModelParams::linear(&[1.0, 2.0], 0.0);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        match m.forward(&x) {
            Err(Error::DimensionMismatch {
                expected, actual, ..
            }) => {
                assert_eq!((expected, actual), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mlp_forward_matches_hand_evaluation() {
        let arch = Architecture::Mlp {
            input_dim: 2,
            hidden_width: 3,
        };
        let m = ModelParams::init(arch, 11).unwrap();
        let p = m.params();
        let x = [0.7, -1.3];
        // Hand-evaluate relu(W1 x + b1) . w2 + b2 with explicit indexing.
        let mut expected = p[12];
        for i in 0..3 {
            let pre = p[2 * i] * x[0] + p[2 * i + 1] * x[1] + p[6 + i];
            let act = if pre > 0.0 { pre } else { 0.0 };
            expected += p[9 + i] * act;
        }
        assert_eq!(m.score(&x), expected);
    }

    #[test]
    fn linear_backward_with_unit_upstream() {
        let m = ModelParams::linear(&[0.5, 0.5], 1.0);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![-1.0, 0.5]]).unwrap();
        let g = m.backward(&x, &[1.0; 3]).unwrap();
        assert_eq!(g, vec![3.0, 6.5, 3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = ModelParams::init(
            Architecture::Mlp {
                input_dim: 3,
                hidden_width: 5,
            },
            3,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 2.0]]).unwrap();
        let g = m.backward(&x, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_upstream_length() {
        let m = ModelParams::linear(&[1.0], 0.0);
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(m.backward(&x, &[1.0]).is_err());
    }

    #[test]
    fn logistic_loss_reference_values() {
        let (l, _) = logistic_loss(&[0.0, 0.0], &[1, -1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);

        let (l, g) = logistic_loss(&[50.0], &[1]).unwrap();
        assert!((0.0..=1e-20).contains(&l));
        assert!(g[0].abs() <= 1e-20);

        let (l, _) = logistic_loss(&[1.0], &[-1]).unwrap();
        assert!((l - 1.313_261_687_518_222_8).abs() < 1e-12);

        // Saturated the other way stays finite.
        let (l, g) = logistic_loss(&[1e4], &[-1]).unwrap();
        assert!((l - 1e4).abs() < 1e-9);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_loss_rejects_bad_label() {
        assert!(matches!(
            logistic_loss(&[0.0, 1.0], &[1, 0]),
            Err(Error::InvalidLabel { row: 1, .. })
        ));
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut m = ModelParams::linear(&[0.3, -0.2], 0.1);
        let before = m.clone();
        let mut st = AdamState::new(3, AdamConfig::with_lr(0.1));
        st.step(&mut m, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        let mut p = [1.0];
        let mut st = AdamState::new(1, AdamConfig::with_lr(0.01));
        st.step_slice(&mut p, &[3.7]).unwrap();
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-9);
        let mut q = [1.0];
        let mut st = AdamState::new(1, AdamConfig::with_lr(0.01));
        st.step_slice(&mut q, &[-0.2]).unwrap();
        assert!((q[0] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn adam_descends_on_square() {
        let mut w = [1.0f64];
        let mut st = AdamState::new(1, AdamConfig::with_lr(0.1));
        let mut prev = w[0].abs();
        for _ in 0..10 {
            let g = [2.0 * w[0]];
            st.step_slice(&mut w, &g).unwrap();
            assert!(w[0].abs() < prev);
            prev = w[0].abs();
        }
    }

    #[test]
    fn adam_schedule_halves_every_500() {
        let st = AdamState::new(1, AdamConfig::with_lr(0.5));
        assert_eq!(st.lr_at(0), 0.5);
        assert_eq!(st.lr_at(499), 0.5);
        assert_eq!(st.lr_at(500), 0.25);
        assert_eq!(st.lr_at(1999), 0.0625);
    }

    #[test]
    fn adam_names_non_finite_parameter() {
        let mut m = ModelParams::zeros(Architecture::Mlp {
            input_dim: 2,
            hidden_width: 2,
        })
        .unwrap();
        let mut g = vec![0.0; m.params().len()];
        g[5] = f64::NAN;
        let mut st = AdamState::new(g.len(), AdamConfig::default());
        match st.step(&mut m, &g) {
            Err(Error::NonFiniteGradient { param }) => assert_eq!(param, "hidden.bias[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let m = ModelParams::init(
            Architecture::Mlp {
                input_dim: 4,
                hidden_width: 6,
            },
            99,
        )
        .unwrap();
        let back = ModelParams::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m.architecture(), back.architecture());
        assert_eq!(back.seed(), Some(99));
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn glorot_bounds_respected() {
        let m = ModelParams::init(
            Architecture::Mlp {
                input_dim: 10,
                hidden_width: 20,
            },
            1,
        )
        .unwrap();
        let a1 = (6.0f64 / 30.0).sqrt();
        assert!(m.params()[..200].iter().all(|w| w.abs() < a1));
        assert!(m.params()[200..220].iter().all(|&b| b == 0.0));
    }
}
