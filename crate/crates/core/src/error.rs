use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range (bound {bound})")]
    Index { index: usize, bound: usize },

    #[error("training diverged: non-finite loss at batch {batch} (epoch {epoch})")]
    Divergence { batch: usize, epoch: usize },

    #[error("class {class} has no trusted examples")]
    MissingClass { class: usize },

    #[error("system is rank-deficient with lambda = {lambda}; a positive regularization weight is required")]
    RegularizationRequired { lambda: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error in {}: {message} (at {location})", path.display())]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with a short description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Broad category used by the CLI to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::Divergence { .. } => ErrorKind::Numerical,
            Error::Format { .. } | Error::Io { .. } | Error::Json(_) | Error::MissingClass { .. } | Error::InsufficientData(_) => {
                ErrorKind::Data
            }
            Error::InvalidInput(_) | Error::Index { .. } | Error::RegularizationRequired { .. } => ErrorKind::Usage,
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}
