use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Error classes shared by every layer of the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor or parameter extents that do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Invalid hyperparameter or option value.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),
    /// A non-finite value appeared during computation.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// API misuse, e.g. a backward pass without its forward cache.
    #[error("usage error: {0}")]
    Usage(String),
    /// A metric is mathematically undefined for the given input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
