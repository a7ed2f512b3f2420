//! Tabular datasets: loading, preprocessing, splitting and synthetic laws.

mod dataset;
mod schema;
mod split;
pub mod synth;

pub use dataset::{Column, ColumnKind, Dataset};
pub use schema::{
    data_dir, load_csv, CategoricalSpec, ColumnSpec, LabelSpec, SchemaConfig, SensitiveSpec,
    Threshold,
};
pub use split::{split, split_and_standardize, SplitSpec, Standardizer};
pub use synth::{synth, SynthKind, SynthSpec};
