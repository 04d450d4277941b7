use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("allocation history is empty")]
    EmptyHistory,

    #[error("trace is empty")]
    EmptyTrace,

    #[error("window {window} exceeds trace length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("strictly fair share is undefined: every candidate has priority index 1")]
    DegenerateShares,

    #[error("all shares are zero")]
    AllZeroShares,

    #[error("invalid config: {field}: {constraint}")]
    Config { field: String, constraint: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}
