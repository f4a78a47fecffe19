use thiserror::Error;

/// Errors raised by the simulator and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("samples must have strictly increasing time: last {last}, got {got}")]
    Ordering { last: f64, got: f64 },

    #[error("sample buffer does not cover the requested time {t}")]
    NotWarm { t: f64 },

    #[error("operation not permitted in the current phase: {0}")]
    Phase(String),

    #[error("numerical blowup at t = {t}")]
    NumericalBlowup { t: f64 },

    #[error("infeasible dwell at t = {t}: V = {v} exceeds V_u = {v_upper}")]
    InfeasibleDwell { t: f64, v: f64, v_upper: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SimError::Dimension { what, expected, got })
    }
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::InvalidInput(format!("{what} contains non-finite values")))
    }
}
