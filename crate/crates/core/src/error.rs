use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point or tangent vector fell outside the region where a map is defined.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A rescaled chart exceeded the normal-coordinate radius of the model.
    #[error("chart violation: {0}")]
    Chart(String),
}

pub type Result<T> = std::result::Result<T, Error>;
