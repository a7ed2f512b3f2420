use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::check_labels;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    OneHot { level: String },
}

/// One feature column. One-hot columns are named `source=level`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub source: String,
}

impl Column {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
            source: name.to_string(),
        }
    }

    pub fn one_hot(source: &str, level: &str) -> Self {
        Self {
            name: format!("{source}={level}"),
            kind: ColumnKind::OneHot {
                level: level.to_string(),
            },
            source: source.to_string(),
        }
    }

    /// Inverse of the naming rule used in CSV dumps.
    pub fn from_header(name: &str) -> Self {
        match name.split_once('=') {
            Some((source, level)) => Self::one_hot(source, level),
            None => Self::continuous(name),
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == ColumnKind::Continuous
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<i8>,
    pub z: Vec<u8>,
    pub columns: Vec<Column>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        y: Vec<i8>,
        z: Vec<u8>,
        columns: Vec<Column>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let ds = Self {
            x,
            y,
            z,
            columns,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.y.len() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: n,
                actual: self.y.len(),
            });
        }
        if self.z.len() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset sensitive attribute",
                expected: n,
                actual: self.z.len(),
            });
        }
        if self.columns.len() != self.x.cols() && n > 0 {
            return Err(Error::DimensionMismatch {
                context: "dataset schema",
                expected: self.x.cols(),
                actual: self.columns.len(),
            });
        }
        check_labels(&self.y)?;
        if let Some(i) = self.z.iter().position(|&z| z > 1) {
            return Err(Error::InvalidDataset(format!(
                "sensitive attribute at row {i} is {}, expected 0 or 1",
                self.z[i]
            )));
        }
        if let Some(k) = self.x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at row {}, column `{}`",
                k / self.x.cols().max(1),
                self.columns[k % self.x.cols().max(1)].name
            )));
        }
        for (source, idx) in self.one_hot_groups() {
            for i in 0..n {
                let s: f64 = idx.iter().map(|&j| self.x.get(i, j)).sum();
                if s != 1.0 {
                    return Err(Error::InvalidDataset(format!(
                        "one-hot group `{source}` sums to {s} at row {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// True on continuous columns, the coordinates an adversary may move.
    pub fn perturbable_mask(&self) -> Vec<bool> {
        self.columns.iter().map(Column::is_continuous).collect()
    }

    /// Column indices of each one-hot group, keyed by source column.
    pub fn one_hot_groups(&self) -> BTreeMap<String, Vec<usize>> {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (j, c) in self.columns.iter().enumerate() {
            if !c.is_continuous() {
                groups.entry(c.source.clone()).or_default().push(j);
            }
        }
        groups
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            z: idx.iter().map(|&i| self.z[i]).collect(),
            columns: self.columns.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn group_counts(&self) -> (usize, usize) {
        let n1 = self.z.iter().filter(|&&z| z == 1).count();
        (self.n() - n1, n1)
    }

    /// Write features, then `y` and `z`, with a header row. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        header.extend(["y", "z"]);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.y[i].to_string());
            rec.push(self.z[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a file produced by [`Dataset::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        let d = names.len().checked_sub(2).filter(|_| {
            names.len() >= 2 && names[names.len() - 2] == "y" && names[names.len() - 1] == "z"
        });
        let Some(d) = d else {
            return Err(Error::MissingColumn {
                column: "y,z".into(),
                path: path.to_path_buf(),
            });
        };
        let columns: Vec<Column> = names[..d].iter().map(|n| Column::from_header(n)).collect();
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            for j in 0..d {
                data.push(parse_f64(&rec[j], row, &columns[j].name)?);
            }
            y.push(parse_f64(&rec[d], row, "y")? as i8);
            z.push(parse_f64(&rec[d + 1], row, "z")? as u8);
        }
        if y.is_empty() {
            return Err(Error::EmptyFile(path.to_path_buf()));
        }
        let x = Matrix::from_vec(y.len(), d, data)?;
        Self::new(x, y, z, columns, format!("csv:{}", path.display()))
    }
}

fn parse_f64(s: &str, row: usize, column: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::InvalidDataset(format!(
            "row {row}: `{s}` in column `{column}` is not a number"
        ))
    })
}
