use thiserror::Error;

/// Errors raised by model validation, simulation, regression and the bound
/// estimators.
#[derive(Error, Debug)]
pub enum LsmError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("transition row (position {position}, action {action}) sums to {sum}, expected 1")]
    RowSum {
        position: usize,
        action: usize,
        sum: f64,
    },

    #[error("control map entry (position {position}, action {action}) = {target} is not a valid position (n_pos = {n_pos})")]
    InvalidControl {
        position: usize,
        action: usize,
        target: usize,
        n_pos: usize,
    },

    #[error("index out of range: {what} = {index}, bound {bound}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid simulation parameters: {0}")]
    InvalidSimulation(String),

    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),

    #[error("regression failed: {0}")]
    Regression(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LsmError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(LsmError::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
