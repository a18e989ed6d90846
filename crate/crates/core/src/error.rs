use numkit::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("sequence needs positions up to {needed} but the context holds {max}")]
    ContextOverflow { needed: usize, max: usize },
    #[error("generation backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Format(String),
    #[error("non-finite loss at step {step}: lm={lm}, pointer={pointer}")]
    NonFiniteLoss { step: usize, lm: f64, pointer: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
