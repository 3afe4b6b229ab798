use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("graph is disconnected into {} components: {components:?}", components.len())]
    Disconnected { components: Vec<Vec<usize>> },
    #[error("non-finite value at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Errors caused by bad user input rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Invalid(_) | Error::Format(_))
    }
}
