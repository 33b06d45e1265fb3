use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs are individually valid but inconsistent with each other.
    #[error("invalid input: {0}")]
    Input(String),
    /// Bank parameters give a nonpositive default boundary.
    #[error("degenerate model: {0}")]
    Degenerate(String),
    /// Conditioning on an event with zero probability.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
