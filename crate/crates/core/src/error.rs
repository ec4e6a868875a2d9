use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pole of the zeta function at s = 1")]
    Pole,

    #[error("unsupported gauge family: {0}")]
    UnsupportedFamily(String),

    #[error("monotonicity violation: {0}")]
    Monotonicity(String),

    #[error("divergent tail: {0}")]
    DivergentTail(String),

    #[error("argument {x} outside the range (0, {max}]")]
    OutOfRange { x: f64, max: f64 },

    #[error("evaluation failed at r = {r}: {message}")]
    Evaluation { r: f64, message: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("map {index} is not a contraction (operator norm {norm})")]
    Contraction { index: usize, norm: f64 },

    #[error("memory budget exceeded: {cells} cells requested, budget {budget}")]
    MemoryBudget { cells: usize, budget: usize },

    #[error("sub-resolution radius {r} (needs at least {min})")]
    SubResolution { r: f64, min: f64 },

    #[error("scaling window too narrow: {usable} usable radii, need {needed}")]
    WindowTooNarrow { usable: usize, needed: usize },

    #[error("range error: {0}")]
    Range(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at(r: f64, err: Error) -> Error {
        match err {
            e @ Error::Evaluation { .. } => e,
            other => Error::Evaluation {
                r,
                message: other.to_string(),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
