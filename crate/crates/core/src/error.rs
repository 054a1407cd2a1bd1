use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("torus side {side} is not divisible by block side {block}")]
    Divisibility { side: usize, block: usize },
    #[error("realization window {window} does not cover depth {needed}")]
    WindowTooShort { window: f64, needed: f64 },
    #[error("replayed realization cannot be extended past its window {window}")]
    NotExtendable { window: f64 },
    #[error("{what} exceeds cap ({size} > {cap})")]
    SizeCap { what: &'static str, size: usize, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
