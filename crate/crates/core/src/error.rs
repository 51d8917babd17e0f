use thiserror::Error;

/// Errors raised by the level-set estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("raster grids differ (bbox or resolution mismatch)")]
    GridMismatch,

    #[error(
        "invalid bisection bracket: lower radius {r_m} already captures an outer point; \
         retry with a smaller lower radius"
    )]
    InvalidBracket { r_m: f64 },

    #[error("estimated level set empty at this threshold")]
    EmptyLevelSet,

    #[error("all calibration cells degenerate ({cells} cells, {replicates} replicates)")]
    AllDegenerate { cells: usize, replicates: usize },

    #[error("optimizer failure: {0}")]
    Optimizer(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
