use thiserror::Error;

use crate::model::Flow;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("power law is undefined for non-positive time index t = {t}")]
    PowerLawDomain { t: f64 },

    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("optimization diverged at iteration {iteration} (loss is not finite)")]
    Diverged { iteration: usize },

    #[error("cannot locate extrema of an empty path")]
    EmptyPath,

    #[error("empty input: no header row")]
    EmptyInput,

    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("no records for flow `{0}`")]
    NoRecordsForFlow(Flow),

    #[error("gap year {0} has no observation")]
    GapYear(i32),

    #[error("parameter document: {0}")]
    Document(String),
}
