use thiserror::Error;

/// Errors raised by the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rank deficiency: requested rank {requested} but numerical rank is {available}")]
    RankDeficient { requested: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
