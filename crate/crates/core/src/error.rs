use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("label at row {row} is {value}, expected -1 or +1")]
    InvalidLabel { row: usize, value: f64 },

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("invalid surrogate: {0}")]
    InvalidSurrogate(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("empty cell {cell}: the constraint needs at least one sample there")]
    EmptyCell { cell: String },

    #[error("constraint requires adversarial scores but none were supplied")]
    MissingAdversarialScores,

    #[error("input has no perturbable (continuous) coordinates")]
    NoPerturbableCoordinates,

    #[error("invalid adversary config: {0}")]
    InvalidAdversary(String),

    #[error("training diverged (non-finite objective); last finite epoch: {last_finite_epoch:?}")]
    Divergence { last_finite_epoch: Option<usize> },

    #[error("no candidate models to select from")]
    EmptyCandidates,

    #[error("Hausdorff distance is undefined for an empty set")]
    EmptySet,

    #[error("slope must be non-zero")]
    DegenerateSlope,

    #[error("no grid point satisfies the fairness constraint (alpha = {alpha})")]
    InfeasibleGrid { alpha: f64 },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` is not categorical and cannot be flipped")]
    NotCategorical(String),

    #[error("missing column `{column}` in {path}")]
    MissingColumn { column: String, path: PathBuf },

    #[error("row {row}: value `{value}` of column `{column}` has no mapping")]
    UnmappedValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("file {0} contains no data rows")]
    EmptyFile(PathBuf),

    #[error("unknown {what} `{name}`")]
    UnknownKind { what: &'static str, name: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
