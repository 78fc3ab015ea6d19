use std::path::PathBuf;

use crate::patterns::PatternSpec;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown level character {ch:?} at line {line}, column {column}")]
    UnknownCharacter { ch: char, line: usize, column: usize },
    #[error("level has no avatar")]
    NoAvatar,
    #[error("level has {0} avatars, expected exactly one")]
    MultipleAvatars(usize),
    #[error("level has {boxes} boxes but {targets} targets")]
    BoxTargetMismatch { boxes: usize, targets: usize },
    #[error("level is empty")]
    EmptyLevel,
    #[error("grid dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("pattern key with {cells} cells does not fit a {expected} model")]
    SpecMismatch { expected: PatternSpec, cells: usize },
    #[error("cannot train a decision tree on an empty dataset")]
    EmptyDataset,
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_string(),
            message: message.into(),
        }
    }
}
