use std::path::PathBuf;

use crate::events::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error kinds for binary event files. The byte offset points at the first
/// byte of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("bad magic")]
    BadMagic,
    #[error("truncated file")]
    Truncated,
    #[error("invalid polarity {0}")]
    InvalidPolarity(i8),
    #[error("invalid label {0}")]
    InvalidLabel(i32),
    #[error("geometry violation: {0}")]
    Geometry(String),
    #[error("timestamp violation: {0}")]
    Timestamp(String),
    #[error("trailing bytes after last record")]
    TrailingBytes,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("invalid tensor header: {0}")]
    Tensor(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid event stream: {}", format_violations(.0))]
    InvalidStream(Vec<Violation>),

    #[error("{kind} at byte offset {offset}")]
    Parse { offset: u64, kind: ParseErrorKind },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged in fold {fold} at epoch {epoch}: {detail}")]
    Divergence {
        fold: usize,
        epoch: usize,
        detail: String,
    },

    #[error("rank-deficient design matrix: column `{column}` is linearly dependent")]
    RankDeficient { column: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(|v| v.to_string()).collect();
    let mut s = shown.join("; ");
    if v.len() > 5 {
        s.push_str(&format!("; ... ({} total)", v.len()));
    }
    s
}
