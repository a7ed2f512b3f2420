//! Experiment configuration files (TOML) and `key=value` overrides.
//!
//! ```toml
//! [data]
//! csv = "tiny_separable.csv"      # or: schema = "adult.toml", or [data.synth]
//! [model]
//! kind = "linear"
//! [train]
//! epochs = 500
//! lambda = 0.0
//! [surrogate]
//! kind = "slide"
//! tau = 0.1
//! [constraint]
//! criterion = "di"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryConfig;
use crate::constraint::{ConstraintSpec, CriterionKind};
use crate::data::{
    load_csv, split_and_standardize, Dataset, SchemaConfig, SplitSpec, Standardizer, SynthSpec,
};
use crate::error::{Error, Result};
use crate::surrogate::SurrogateSpec;
use crate::train::{CccpConfig, ModelSpec, TrainConfig, TrainMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// A dataset dump with `y` and `z` columns.
    pub csv: Option<PathBuf>,
    /// A raw-table schema; its `file` is resolved against the schema's
    /// directory, then `SLIDE_DATA_DIR`.
    pub schema: Option<PathBuf>,
    /// Overrides the schema's data file.
    pub file: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    /// Rows drawn from `synth`.
    pub n: usize,
    pub split: SplitSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv: None,
            schema: None,
            file: None,
            synth: None,
            n: 1000,
            split: SplitSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub tau_range: Option<[f64; 2]>,
    pub restarts: usize,
    pub mode: TrainMode,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            lambda: t.lambda,
            tau_range: t.tau_range,
            restarts: t.restarts,
            mode: t.mode,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub flip_columns: Vec<String>,
    pub mnf_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            flip_columns: Vec::new(),
            mnf_threshold: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelSpec,
    pub train: TrainSection,
    pub surrogate: SurrogateSpec,
    pub constraint: ConstraintSpec,
    pub uif: AdversaryConfig,
    pub cccp: CccpConfig,
    pub sweep: SweepSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: DataConfig::default(),
            model: t.model,
            train: TrainSection::default(),
            surrogate: t.surrogate,
            constraint: ConstraintSpec::new(CriterionKind::Di),
            uif: t.uif,
            cccp: t.cccp,
            sweep: SweepSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Parse a scalar override: TOML syntax when it parses, a bare string
/// otherwise.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.csv, &mut cfg.data.schema, &mut cfg.data.file]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Set a dotted key such as `train.lambda` or `surrogate.kind`.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root =
            toml::Value::try_from(&*self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::InvalidConfig(format!("{key}: not a section")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parse_value(raw));
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let next: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("{key}={raw}: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [
            self.data.csv.is_some(),
            self.data.schema.is_some(),
            self.data.synth.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(Error::InvalidConfig(
                "data: set only one of csv, schema, synth".into(),
            ));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr: self.train.lr,
            lambda: self.train.lambda,
            surrogate: self.surrogate,
            tau_range: self.train.tau_range,
            constraint: self.constraint,
            uif: self.uif,
            restarts: self.train.restarts,
            mode: self.train.mode,
            model: self.model,
            cccp: self.cccp,
            seed: self.train.seed,
        }
    }

    /// The full dataset named by `[data]`.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        if let Some(p) = &d.csv {
            return Dataset::read_csv(p);
        }
        if let Some(p) = &d.schema {
            let schema = SchemaConfig::load(p)?;
            let file = match &d.file {
                Some(f) => f.clone(),
                None => schema
                    .resolve_file(p.parent().unwrap_or(Path::new(".")))
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "data file `{}` of schema {} not found (set SLIDE_DATA_DIR)",
                            schema.file.as_deref().unwrap_or("<unset>"),
                            p.display()
                        ))
                    })?,
            };
            return load_csv(&file, &schema);
        }
        if let Some(s) = &d.synth {
            return s.generate(d.n, self.train.seed);
        }
        Err(Error::InvalidConfig("data: no source configured".into()))
    }

    /// Train / validation / test parts, standardized on train.
    pub fn load_splits(&self) -> Result<(Dataset, Dataset, Dataset, Standardizer)> {
        split_and_standardize(&self.load_dataset()?, &self.data.split)
    }
}
