use std::io;
use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed input at {position}: {message}")]
    MalformedInput { position: Position, message: String },

    #[error("invalid UTF-8 at {position}")]
    Encoding { position: Position },

    #[error("line {line}: expected {expected} tab-separated columns, found {found}")]
    Arity {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("entity {entity_id} maps to both article {first} and article {second}")]
    DuplicateEntity {
        entity_id: String,
        first: String,
        second: String,
    },

    #[error("article {article_id} appears more than once in snapshot {snapshot_tag}")]
    DuplicateArticle {
        article_id: String,
        snapshot_tag: String,
    },

    #[error("sample rate {0} is outside (0, 1]")]
    InvalidRate(f64),

    #[error("invalid snapshot pair: {0}")]
    InvalidSnapshotPair(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("funnel counts increase from {from} to {to} ({category})")]
    Render {
        from: &'static str,
        to: &'static str,
        category: &'static str,
    },

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn malformed(position: Position, message: impl Into<String>) -> Self {
        Error::MalformedInput {
            position,
            message: message.into(),
        }
    }

    /// Attaches the file an error came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::InFile { .. } => self,
            other => Error::InFile {
                path: path.into(),
                source: Box::new(other),
            },
        }
    }

    /// True for errors detected before any data is processed (bad config, missing paths).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidRate(_) | Error::InvalidSnapshotPair(_) => true,
            Error::InFile { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

/// Location of a problem inside an input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Line(u64),
    Byte(u64),
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Position::Line(n) => write!(f, "line {n}"),
            Position::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
