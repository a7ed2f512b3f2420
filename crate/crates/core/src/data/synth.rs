//! Synthetic data laws. Every generator is also a [`Sampler`], so the same
//! law drives finite datasets and Monte-Carlo population estimates.
//!
//! `N(m, v)` parameters are variances unless a generator says otherwise.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset};
use crate::constraint::Sampler;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{substream, Rng};

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sign(b: bool) -> i8 {
    if b {
        1
    } else {
        -1
    }
}

/// Two Gaussian classes in the plane: `X | Y=-1 ~ N(mean_neg, var I)`,
/// `X | Y=+1 ~ N(mean_pos, var I)`, equal class priors. No sensitive
/// attribute; `z` is all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianMixture2d {
    pub mean_neg: [f64; 2],
    pub mean_pos: [f64; 2],
    pub var: f64,
}

impl Default for GaussianMixture2d {
    fn default() -> Self {
        Self {
            mean_neg: [0.5, 4.5],
            mean_pos: [2.0, 0.5],
            var: 2.0,
        }
    }
}

impl GaussianMixture2d {
    fn draw_y(&self, y: i8, rng: &mut Rng) -> Vec<f64> {
        let m = if y == 1 { self.mean_pos } else { self.mean_neg };
        let s = self.var.sqrt();
        vec![m[0] + s * normal(rng), m[1] + s * normal(rng)]
    }
}

impl Sampler for GaussianMixture2d {
    fn dim(&self) -> usize {
        2
    }
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
        let y = sign(rng.gen_bool(0.5));
        (self.draw_y(y, rng), y, 0)
    }
    fn draw_given(&self, _z: u8, y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
        let y = y.unwrap_or_else(|| sign(rng.gen_bool(0.5)));
        self.draw_y(y, rng)
    }
}

/// Two interleaved half circles of radius 1: the upper arc is class `-1`,
/// the lower arc, shifted by `(1, -offset)`, is class `+1`. Isotropic
/// Gaussian noise with standard deviation `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoMoon {
    pub noise: f64,
    pub offset: f64,
}

impl Default for TwoMoon {
    fn default() -> Self {
        Self {
            noise: 0.1,
            offset: 0.5,
        }
    }
}

impl TwoMoon {
    fn draw_y(&self, y: i8, rng: &mut Rng) -> Vec<f64> {
        let t = rng.gen_range(0.0..std::f64::consts::PI);
        let (cx, cy) = if y == 1 {
            (1.0 - t.cos(), self.offset - t.sin())
        } else {
            (t.cos(), t.sin())
        };
        vec![cx + self.noise * normal(rng), cy + self.noise * normal(rng)]
    }
}

impl Sampler for TwoMoon {
    fn dim(&self) -> usize {
        2
    }
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
        let y = sign(rng.gen_bool(0.5));
        (self.draw_y(y, rng), y, 0)
    }
    fn draw_given(&self, _z: u8, y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
        let y = y.unwrap_or_else(|| sign(rng.gen_bool(0.5)));
        self.draw_y(y, rng)
    }
}

/// `X | Z=z ~ N(2z - 1, 1)` with `P(Z=1) = 1/2`; labels follow
/// `P(Y=1 | x) = sigmoid(x)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1dGroups {}

impl Sampler for Gaussian1dGroups {
    fn dim(&self) -> usize {
        1
    }
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
        let z = u8::from(rng.gen_bool(0.5));
        let x = self.draw_given(z, None, rng);
        let y = sign(rng.gen_bool(crate::nn::sigmoid(x[0])));
        (x, y, z)
    }
    fn draw_given(&self, z: u8, _y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
        vec![2.0 * f64::from(z) - 1.0 + normal(rng)]
    }
}

/// Four Gaussian cells indexed by `(S, Y)`. Features are `x` followed by a
/// one-hot encoding of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceSim {
    /// Cell means for `(S,Y) = (0,-1), (0,+1), (1,-1), (1,+1)`.
    pub means: [f64; 4],
    /// Cell variances in the same order.
    pub vars: [f64; 4],
    pub p_s1: f64,
    /// `P(Y = +1 | S = 0)` and `P(Y = +1 | S = 1)`.
    pub p_y1: [f64; 2],
}

impl Default for ConvergenceSim {
    fn default() -> Self {
        Self {
            means: [-1.0, 1.5, -0.5, 2.5],
            vars: [1.5, 0.5, 1.0, 1.5],
            p_s1: 0.5,
            p_y1: [0.5, 0.5],
        }
    }
}

impl ConvergenceSim {
    pub fn cell(s: u8, y: i8) -> usize {
        2 * usize::from(s) + usize::from(y == 1)
    }

    /// Prior probability of cell `(s, y)`.
    pub fn cell_prob(&self, s: u8, y: i8) -> f64 {
        let ps = if s == 1 { self.p_s1 } else { 1.0 - self.p_s1 };
        let py = self.p_y1[usize::from(s)];
        ps * if y == 1 { py } else { 1.0 - py }
    }

    fn draw_cell(&self, s: u8, y: i8, rng: &mut Rng) -> Vec<f64> {
        let k = Self::cell(s, y);
        let x = self.means[k] + self.vars[k].sqrt() * normal(rng);
        vec![x, f64::from(1 - s), f64::from(s)]
    }
}

impl Sampler for ConvergenceSim {
    fn dim(&self) -> usize {
        3
    }
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
        let s = u8::from(rng.gen_bool(self.p_s1));
        let y = sign(rng.gen_bool(self.p_y1[usize::from(s)]));
        (self.draw_cell(s, y, rng), y, s)
    }
    fn draw_given(&self, z: u8, y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
        let y = y.unwrap_or_else(|| sign(rng.gen_bool(self.p_y1[usize::from(z)])));
        self.draw_cell(z, y, rng)
    }
}

/// Group-dependent base rates with a proxy feature:
/// `S ~ Bern(1/2)`, `P(Y=1 | S=s) = p_y1[s]`, `x1 = shift * y + N(0,1)`,
/// `x2 = s + proxy_sd * N(0,1)`. Features are `x1, x2` and one-hot `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasedGroups {
    pub p_y1: [f64; 2],
    pub shift: f64,
    pub proxy_sd: f64,
}

impl Default for BiasedGroups {
    fn default() -> Self {
        Self {
            p_y1: [0.4, 0.6],
            shift: 1.0,
            proxy_sd: 0.5,
        }
    }
}

impl BiasedGroups {
    fn draw_sy(&self, s: u8, y: i8, rng: &mut Rng) -> Vec<f64> {
        vec![
            self.shift * f64::from(y) + normal(rng),
            f64::from(s) + self.proxy_sd * normal(rng),
            f64::from(1 - s),
            f64::from(s),
        ]
    }
}

impl Sampler for BiasedGroups {
    fn dim(&self) -> usize {
        4
    }
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
        let s = u8::from(rng.gen_bool(0.5));
        let y = sign(rng.gen_bool(self.p_y1[usize::from(s)]));
        (self.draw_sy(s, y, rng), y, s)
    }
    fn draw_given(&self, z: u8, y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
        let y = y.unwrap_or_else(|| sign(rng.gen_bool(self.p_y1[usize::from(z)])));
        self.draw_sy(z, y, rng)
    }
}

/// Linearly separable classes: `x1 = y (margin + U(0, 2))`, `x2 ~ N(0,1)`,
/// `Z ~ Bern(1/2)` independent of everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Separable {
    pub margin: f64,
}

impl Default for Separable {
    fn default() -> Self {
        Self { margin: 0.5 }
    }
}

impl Separable {
    fn draw_y(&self, y: i8, rng: &mut Rng) -> Vec<f64> {
        let a = self.margin + rng.gen_range(0.0..2.0);
        vec![f64::from(y) * a, normal(rng)]
    }
}

impl Sampler for Separable {
    fn dim(&self) -> usize {
        2
    }
    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, i8, u8) {
        let y = sign(rng.gen_bool(0.5));
        let x = self.draw_y(y, rng);
        (x, y, u8::from(rng.gen_bool(0.5)))
    }
    fn draw_given(&self, _z: u8, y: Option<i8>, rng: &mut Rng) -> Vec<f64> {
        let y = y.unwrap_or_else(|| sign(rng.gen_bool(0.5)));
        self.draw_y(y, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    GaussianMixture2d,
    TwoMoon,
    Gaussian1dGroups,
    ConvergenceSim,
    BiasedGroups,
    Separable,
}

impl SynthKind {
    pub const ALL: [SynthKind; 6] = [
        SynthKind::GaussianMixture2d,
        SynthKind::TwoMoon,
        SynthKind::Gaussian1dGroups,
        SynthKind::ConvergenceSim,
        SynthKind::BiasedGroups,
        SynthKind::Separable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::GaussianMixture2d => "gaussian_mixture_2d",
            SynthKind::TwoMoon => "two_moon",
            SynthKind::Gaussian1dGroups => "gaussian_1d_groups",
            SynthKind::ConvergenceSim => "convergence_sim",
            SynthKind::BiasedGroups => "biased_groups",
            SynthKind::Separable => "separable",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "synthetic dataset",
                name: s.to_string(),
            })
    }
}

/// A synthetic law with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    GaussianMixture2d(GaussianMixture2d),
    TwoMoon(TwoMoon),
    Gaussian1dGroups(Gaussian1dGroups),
    ConvergenceSim(ConvergenceSim),
    BiasedGroups(BiasedGroups),
    Separable(Separable),
}

impl SynthSpec {
    pub fn default_for(kind: SynthKind) -> Self {
        match kind {
            SynthKind::GaussianMixture2d => SynthSpec::GaussianMixture2d(Default::default()),
            SynthKind::TwoMoon => SynthSpec::TwoMoon(Default::default()),
            SynthKind::Gaussian1dGroups => SynthSpec::Gaussian1dGroups(Default::default()),
            SynthKind::ConvergenceSim => SynthSpec::ConvergenceSim(Default::default()),
            SynthKind::BiasedGroups => SynthSpec::BiasedGroups(Default::default()),
            SynthKind::Separable => SynthSpec::Separable(Default::default()),
        }
    }

    pub fn kind(&self) -> SynthKind {
        match self {
            SynthSpec::GaussianMixture2d(_) => SynthKind::GaussianMixture2d,
            SynthSpec::TwoMoon(_) => SynthKind::TwoMoon,
            SynthSpec::Gaussian1dGroups(_) => SynthKind::Gaussian1dGroups,
            SynthSpec::ConvergenceSim(_) => SynthKind::ConvergenceSim,
            SynthSpec::BiasedGroups(_) => SynthKind::BiasedGroups,
            SynthSpec::Separable(_) => SynthKind::Separable,
        }
    }

    pub fn sampler(&self) -> &dyn Sampler {
        match self {
            SynthSpec::GaussianMixture2d(s) => s,
            SynthSpec::TwoMoon(s) => s,
            SynthSpec::Gaussian1dGroups(s) => s,
            SynthSpec::ConvergenceSim(s) => s,
            SynthSpec::BiasedGroups(s) => s,
            SynthSpec::Separable(s) => s,
        }
    }

    fn columns(&self) -> Vec<Column> {
        match self.kind() {
            SynthKind::GaussianMixture2d | SynthKind::TwoMoon | SynthKind::Separable => {
                vec![Column::continuous("x1"), Column::continuous("x2")]
            }
            SynthKind::Gaussian1dGroups => vec![Column::continuous("x")],
            SynthKind::ConvergenceSim => vec![
                Column::continuous("x"),
                Column::one_hot("s", "0"),
                Column::one_hot("s", "1"),
            ],
            SynthKind::BiasedGroups => vec![
                Column::continuous("x1"),
                Column::continuous("x2"),
                Column::one_hot("s", "0"),
                Column::one_hot("s", "1"),
            ],
        }
    }

    /// Draw `n` i.i.d. rows.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidDataset("synthetic n must be >= 1".into()));
        }
        let sampler = self.sampler();
        let mut rng = substream(seed, "synth", 0);
        let d = sampler.dim();
        let mut data = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, yi, zi) = sampler.draw(&mut rng);
            data.extend(x);
            y.push(yi);
            z.push(zi);
        }
        let params = serde_json::to_string(self)?;
        Dataset::new(
            Matrix::from_vec(n, d, data)?,
            y,
            z,
            self.columns(),
            format!("synth:{params} n={n} seed={seed} normal-params=variance"),
        )
    }
}

/// Generate `n` rows of the named law with default parameters.
pub fn synth(kind: SynthKind, n: usize, seed: u64) -> Result<Dataset> {
    SynthSpec::default_for(kind).generate(n, seed)
}
