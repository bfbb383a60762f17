//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A categorical level that a fitted model cannot represent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratum {
    pub column: String,
    pub level: String,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.column, self.level)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` has no level `{level}`")]
    UnknownLevel { column: String, level: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column `{column}` must be fully observed but row {row} is missing")]
    MissingRequired { row: usize, column: String },

    #[error("column `{column}` is unobserved at row {row} but the operation needs it")]
    Unobserved { row: usize, column: String },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("column `{0}` is constant")]
    ConstantColumn(String),

    #[error("{rows} rows cannot identify {parameters} parameters")]
    InsufficientRows { rows: usize, parameters: usize },

    #[error("rank-deficient design at term `{term}` (dropped strata: [{}])", join_strata(.dropped))]
    DroppedStrata { term: String, dropped: Vec<Stratum> },

    #[error("logistic fit did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        coefficients: Vec<f64>,
    },

    #[error("separation detected: linear predictor reached {max_abs_linear_predictor:.1}")]
    Separation { max_abs_linear_predictor: f64 },

    #[error("level `{}` was absent from the fitting data ({} rows affected)", .stratum, .rows.len())]
    UnseenLevel { stratum: Stratum, rows: Vec<usize> },

    #[error("no admissible residual for prediction index {index}")]
    EmptyAdmissibleSet { index: usize },

    #[error("calibration target {target} unreachable for intercepts in [-50, 50]")]
    CalibrationUnreachable { target: f64 },

    #[error("{framework} cannot run on this missingness pattern: {reason}")]
    PatternMismatch { framework: String, reason: String },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("imputation {index}: {source}")]
    Imputation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("metric: {0}")]
    Metric(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_strata(strata: &[Stratum]) -> String {
    strata
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// Wraps an error with the label of the generation stage that raised it.
    pub fn at_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable name of the innermost error, used in run records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::UnknownColumn(_) => "unknown_column",
            Error::UnknownLevel { .. } => "unknown_level",
            Error::Parse { .. } => "parse",
            Error::MissingRequired { .. } => "missing_required",
            Error::Unobserved { .. } => "unobserved",
            Error::InvalidTable(_) => "invalid_table",
            Error::ZeroVariance(_) => "zero_variance",
            Error::ConstantColumn(_) => "constant_column",
            Error::InsufficientRows { .. } => "insufficient_rows",
            Error::DroppedStrata { .. } => "dropped_strata",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Separation { .. } => "separation",
            Error::UnseenLevel { .. } => "unseen_level",
            Error::EmptyAdmissibleSet { .. } => "empty_admissible_set",
            Error::CalibrationUnreachable { .. } => "calibration_unreachable",
            Error::PatternMismatch { .. } => "pattern_mismatch",
            Error::Stage { source, .. } | Error::Imputation { source, .. } => source.kind(),
            Error::Metric(_) => "metric",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
