use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad command line or configuration text.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A file that is not in the expected format.
    #[error("format error: {0}")]
    Format(String),
    /// A file shorter or longer than its header implies.
    #[error("truncation error: {0}")]
    Truncated(String),
    #[error(transparent)]
    Core(#[from] hoseq_core::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Core(hoseq_core::Error::Data(msg.into()))
    }

    /// 1 usage, 2 data or format, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        use hoseq_core::Error as E;
        match self {
            Self::Usage(_) | Self::Core(E::Config(_) | E::Usage(_)) => 1,
            Self::Io { .. } | Self::Format(_) | Self::Truncated(_) => 2,
            Self::Core(E::Data(_) | E::Dimension(_) | E::UndefinedMetric(_)) => 2,
            Self::Core(E::Numeric(_)) | Self::GradCheck(_) => 3,
        }
    }
}
