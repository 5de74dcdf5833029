use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("grid alignment: {0}")]
    Alignment(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("endpoint outside lattice box: {0}")]
    OutsideBox(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("lattice truncation: {0}")]
    Truncation(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("statistics: {0}")]
    Statistics(String),
    #[error("step size: {0}")]
    StepSize(String),
    #[error("config: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
