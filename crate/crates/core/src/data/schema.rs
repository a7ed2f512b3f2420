use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Describes how a raw CSV file becomes a [`Dataset`].
///
/// ```toml
/// name = "adult"
/// file = "adult.csv"
/// missing = ["?"]
///
/// [label]
/// column = "income"
/// positive = [">50K"]
/// negative = ["<=50K"]
///
/// [sensitive]
/// column = "sex"
/// group1 = ["Male"]
///
/// [[columns]]
/// name = "age"
/// kind = "continuous"
///
/// [[columns]]
/// name = "workclass"
/// kind = "categorical"
/// levels = ["private", "other"]
/// merge = { Private = "private", "*" = "other" }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub name: String,
    /// Data file, relative to the schema file's directory or `SLIDE_DATA_DIR`.
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Raw tokens treated as missing; rows holding one are dropped.
    #[serde(default)]
    pub missing: Vec<String>,
    pub label: LabelSpec,
    pub sensitive: SensitiveSpec,
    pub columns: Vec<ColumnSpec>,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub column: String,
    /// Raw values mapped to `z = 1`.
    #[serde(default)]
    pub group1: Option<Vec<String>>,
    /// Raw values mapped to `z = 0`; all remaining values when absent.
    #[serde(default)]
    pub group0: Option<Vec<String>>,
    /// Numeric rule `z = I(value >= threshold)`.
    #[serde(default)]
    pub threshold: Option<Threshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Value(f64),
    /// Only `"median"` is recognised.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSpec {
    Continuous { name: String },
    Categorical(CategoricalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    /// One-hot levels, in column order.
    pub levels: Vec<String>,
    /// Raw value to level; the key `"*"` catches every other value.
    #[serde(default)]
    pub merge: BTreeMap<String, String>,
}

impl ColumnSpec {
    fn name(&self) -> &str {
        match self {
            ColumnSpec::Continuous { name } => name,
            ColumnSpec::Categorical(c) => &c.name,
        }
    }
}

impl SchemaConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sensitive;
        if s.group1.is_none() && s.threshold.is_none() {
            return Err(Error::InvalidConfig(format!(
                "schema `{}`: sensitive needs group1 or threshold",
                self.name
            )));
        }
        if let Some(Threshold::Named(n)) = &s.threshold {
            if n != "median" {
                return Err(Error::InvalidConfig(format!(
                    "schema `{}`: unknown threshold `{n}`",
                    self.name
                )));
            }
        }
        for c in &self.columns {
            if let ColumnSpec::Categorical(c) = c {
                if c.levels.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "categorical column `{}` has no levels",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Feature dimension after one-hot expansion.
    pub fn dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnSpec::Continuous { .. } => 1,
                ColumnSpec::Categorical(c) => c.levels.len(),
            })
            .sum()
    }

    /// Resolve the data file: absolute paths as-is, otherwise under
    /// `SLIDE_DATA_DIR` if set, else next to the schema.
    pub fn resolve_file(&self, schema_dir: &Path) -> Option<PathBuf> {
        let f = Path::new(self.file.as_deref()?);
        if f.is_absolute() {
            return Some(f.to_path_buf());
        }
        Some(match data_dir() {
            Some(d) => d.join(f),
            None => schema_dir.join(f),
        })
    }
}

/// Dataset root from the `SLIDE_DATA_DIR` environment variable.
pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os("SLIDE_DATA_DIR").map(PathBuf::from)
}

fn categorical_level<'a>(c: &'a CategoricalSpec, raw: &'a str) -> Option<&'a str> {
    let mapped = c
        .merge
        .get(raw)
        .or_else(|| {
            (!c.levels.iter().any(|l| l == raw))
                .then(|| c.merge.get("*"))
                .flatten()
        })
        .map(String::as_str)
        .unwrap_or(raw);
    c.levels.iter().find(|l| *l == mapped).map(String::as_str)
}

/// Load a raw CSV into an unstandardized dataset. Continuous columns are
/// kept on their raw scale; fit a [`super::Standardizer`] on the training
/// split afterwards.
pub fn load_csv(path: &Path, schema: &SchemaConfig) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let col = |name: &str| {
        header
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                path: path.to_path_buf(),
            })
    };
    let label_idx = col(&schema.label.column)?;
    let sens_idx = col(&schema.sensitive.column)?;
    let feat_idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| col(c.name()))
        .collect::<Result<_>>()?;

    let mut columns = Vec::with_capacity(schema.dim());
    for c in &schema.columns {
        match c {
            ColumnSpec::Continuous { name } => columns.push(Column::continuous(name)),
            ColumnSpec::Categorical(c) => {
                columns.extend(c.levels.iter().map(|l| Column::one_hot(&c.name, l)))
            }
        }
    }

    let is_missing = |v: &str| schema.missing.iter().any(|m| m == v);
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut sens_raw = Vec::new();
    let mut dropped = 0usize;
    let mut total = 0usize;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        total += 1;
        let used = feat_idx.iter().chain([&label_idx, &sens_idx]);
        if used.clone().any(|&i| rec.get(i).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        let label = &rec[label_idx];
        let yi = if schema.label.positive.iter().any(|p| p == label) {
            1
        } else if schema.label.negative.iter().any(|p| p == label) {
            -1
        } else {
            return Err(Error::UnmappedValue {
                row,
                column: schema.label.column.clone(),
                value: label.to_string(),
            });
        };
        for (c, &i) in schema.columns.iter().zip(&feat_idx) {
            let raw = &rec[i];
            match c {
                ColumnSpec::Continuous { name } => {
                    let v: f64 = raw.parse().map_err(|_| {
                        Error::InvalidDataset(format!(
                            "row {row}: `{raw}` in continuous column `{name}` is not a number"
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::InvalidDataset(format!(
                            "row {row}: non-finite value in column `{name}`"
                        )));
                    }
                    data.push(v);
                }
                ColumnSpec::Categorical(c) => {
                    let level = categorical_level(c, raw).ok_or_else(|| Error::UnmappedValue {
                        row,
                        column: c.name.clone(),
                        value: raw.to_string(),
                    })?;
                    data.extend(c.levels.iter().map(|l| if l == level { 1.0 } else { 0.0 }));
                }
            }
        }
        y.push(yi);
        sens_raw.push((row, rec[sens_idx].to_string()));
    }
    if total == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    if dropped > 0 {
        log::info!(
            "{}: dropped {dropped} of {total} rows with missing values",
            path.display()
        );
    }
    if y.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "{}: every row has a missing value",
            path.display()
        )));
    }
    let z = sensitive_values(&schema.sensitive, &sens_raw)?;
    let x = Matrix::from_vec(y.len(), columns.len(), data)?;
    Dataset::new(
        x,
        y,
        z,
        columns,
        format!("csv:{} schema:{}", path.display(), schema.name),
    )
}

fn sensitive_values(spec: &SensitiveSpec, raw: &[(usize, String)]) -> Result<Vec<u8>> {
    if let Some(t) = &spec.threshold {
        let nums: Vec<f64> = raw
            .iter()
            .map(|(row, v)| {
                v.parse::<f64>().map_err(|_| Error::UnmappedValue {
                    row: *row,
                    column: spec.column.clone(),
                    value: v.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let cut = match t {
            Threshold::Value(v) => *v,
            Threshold::Named(_) => median(&nums),
        };
        return Ok(nums.iter().map(|&v| u8::from(v >= cut)).collect());
    }
    let g1 = spec.group1.as_deref().unwrap_or_default();
    raw.iter()
        .map(|(row, v)| {
            if g1.contains(v) {
                Ok(1)
            } else if spec.group0.as_ref().is_none_or(|g0| g0.contains(v)) {
                Ok(0)
            } else {
                Err(Error::UnmappedValue {
                    row: *row,
                    column: spec.column.clone(),
                    value: v.clone(),
                })
            }
        })
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const SCHEMA: &str = r#"
name = "tiny"
missing = ["?"]

[label]
column = "income"
positive = [">50K"]
negative = ["<=50K"]

[sensitive]
column = "sex"
group1 = ["M"]
group0 = ["F"]

[[columns]]
name = "age"
kind = "continuous"

[[columns]]
name = "sex"
kind = "categorical"
levels = ["F", "M"]
"#;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("d.csv");
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn three_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "age,sex,income\n30,M,>50K\n40,F,<=50K\n?,F,<=50K\n25,F,>50K\n",
        );
        let schema = SchemaConfig::from_toml(SCHEMA).unwrap();
        let ds = load_csv(&p, &schema).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(
            ds.x,
            Matrix::from_rows(&[
                vec![30.0, 0.0, 1.0],
                vec![40.0, 1.0, 0.0],
                vec![25.0, 1.0, 0.0]
            ])
            .unwrap()
        );
        assert_eq!(ds.y, vec![1, -1, 1]);
        assert_eq!(ds.z, vec![1, 0, 0]);
        assert_eq!(ds.columns[2].name, "sex=M");
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let schema = SchemaConfig::from_toml(SCHEMA).unwrap();
        let p = write(dir.path(), "age,income\n30,>50K\n");
        assert!(matches!(
            load_csv(&p, &schema),
            Err(Error::MissingColumn { .. })
        ));
        let p = write(dir.path(), "age,sex,income\n30,M,maybe\n");
        assert!(matches!(
            load_csv(&p, &schema),
            Err(Error::UnmappedValue { .. })
        ));
        let p = write(dir.path(), "age,sex,income\n");
        assert!(matches!(load_csv(&p, &schema), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn merge_and_median_threshold() {
        let schema = SchemaConfig::from_toml(
            r#"
name = "m"
[label]
column = "y"
positive = ["yes"]
negative = ["no"]
[sensitive]
column = "age"
threshold = "median"
[[columns]]
name = "job"
kind = "categorical"
levels = ["private", "other"]
merge = { Private = "private", "*" = "other" }
"#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "age,job,y\n20,Private,yes\n30,Gov,no\n40,other,no\n",
        );
        let ds = load_csv(&p, &schema).unwrap();
        assert_eq!(ds.z, vec![0, 1, 1]);
        assert_eq!(ds.x.row(0), &[1.0, 0.0]);
        assert_eq!(ds.x.row(1), &[0.0, 1.0]);
        assert_eq!(ds.x.row(2), &[0.0, 1.0]);
    }
}
