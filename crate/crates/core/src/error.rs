use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Missing, malformed or inconsistent input data, and I/O failures.
    Data,
    /// The optimization or a numeric routine produced a non-finite value.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("image error on {path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("image {id}: {msg}")]
    Dimension { id: u32, msg: String },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("image {0} not found in dataset")]
    UnknownImage(u32),
    #[error("nothing to restore: image {0} has no pixel with depth")]
    NothingToRestore(u32),
    #[error("no free parameters: every parameter group is frozen")]
    NoFreeParameters,
    #[error("non-finite objective at step {step} on channel {channel}")]
    NonFinite { step: usize, channel: usize },
    #[error("empty mask")]
    EmptyMask,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::NoFreeParameters => ErrorKind::Usage,
            Error::NonFinite { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
