use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Train / validation / test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub repetition: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.6, 0.2, 0.2],
            seed: 0,
            repetition: 0,
        }
    }
}

/// Random train/validation/test partition. Validation and test receive
/// `floor(ratio * n)` rows each; the remainder goes to training.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let n = ds.n();
    if n < 10 {
        return Err(Error::InvalidDataset(format!(
            "split needs at least 10 rows, got {n}"
        )));
    }
    if spec.ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        || (spec.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidConfig(format!(
            "split ratios {:?} must be non-negative and sum to 1",
            spec.ratios
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(spec.seed, "split", spec.repetition));
    let n_val = (spec.ratios[1] * n as f64).floor() as usize;
    let n_test = (spec.ratios[2] * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;
    let (train, rest) = idx.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((ds.subset(train), ds.subset(val), ds.subset(test)))
}

/// Per-column mean/sd scaling of continuous columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Which split the parameters were fit on.
    pub provenance: String,
}

const SD_FLOOR: f64 = 1e-8;

impl Standardizer {
    /// Fit on the continuous columns of the training split. Constant columns
    /// get an sd floor of `1e-8` and map to exact zeros.
    pub fn fit(train: &Dataset) -> Self {
        let n = train.n() as f64;
        let mut columns = Vec::new();
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        for (j, c) in train.columns.iter().enumerate() {
            if !c.is_continuous() {
                continue;
            }
            let col: Vec<f64> = (0..train.n()).map(|i| train.x.get(i, j)).collect();
            let constant = col.windows(2).all(|w| w[0] == w[1]);
            let (m, s) = if constant {
                log::warn!(
                    "column `{}` is constant on the training split; using sd floor {SD_FLOOR}",
                    c.name
                );
                (col.first().copied().unwrap_or(0.0), SD_FLOOR)
            } else {
                let m = col.iter().sum::<f64>() / n;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
                (m, v.sqrt().max(SD_FLOOR))
            };
            columns.push(j);
            mean.push(m);
            sd.push(s);
        }
        Self {
            columns,
            mean,
            sd,
            provenance: "train".to_string(),
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        for i in 0..out.n() {
            let row = out.x.row_mut(i);
            for ((&j, m), s) in self.columns.iter().zip(&self.mean).zip(&self.sd) {
                row[j] = (row[j] - m) / s;
            }
        }
        out
    }
}

/// Split, then standardize all three parts with parameters fit on train.
pub fn split_and_standardize(
    ds: &Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset, Dataset, Standardizer)> {
    let (train, val, test) = split(ds, spec)?;
    let st = Standardizer::fit(&train);
    Ok((st.apply(&train), st.apply(&val), st.apply(&test), st))
}
