use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ClassifierId, FilterId, ItemId};

pub type Result<T, E = ScreenError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ScreenError {
    #[error("gold record for item {item} has no label for filter {filter}")]
    MissingGoldLabel { item: ItemId, filter: FilterId },

    #[error("gold record for item {item} has a label for undeclared filter {filter}")]
    UndeclaredFilter { item: ItemId, filter: FilterId },

    #[error("duplicate gold entry for item {item}, filter {filter}")]
    DuplicateGold { item: ItemId, filter: FilterId },

    #[error("decision for item {0} has no gold record")]
    UnknownItem(ItemId),

    #[error("unknown classifier {0}")]
    UnknownClassifier(ClassifierId),

    #[error("classifier {0} has no test votes")]
    NoTestVotes(ClassifierId),

    #[error("vote from classifier {0} which is not in the kept set")]
    PrunedClassifier(ClassifierId),

    #[error("correlation needs at least 2 baseline items, got {0}")]
    TooFewBaselineItems(usize),

    #[error("output vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("insufficient workers: {available} passed the test gate, {needed} needed")]
    InsufficientWorkers { available: usize, needed: usize },

    #[error("no expert label available for item {0}")]
    NoExpertLabel(ItemId),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("refusing to overwrite existing file {} (pass --force)", .0.display())]
    OutputExists(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ScreenError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ScreenError::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ScreenError::Io {
            path: path.into(),
            source,
        }
    }
}
