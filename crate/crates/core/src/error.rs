use thiserror::Error;

use crate::vocab::Axis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unnormalizable row: {table} row for class {class} has zero total mass")]
    UnnormalizableRow { table: &'static str, class: usize },

    #[error("episode {episode_id}: {detail}")]
    InvalidSequence { episode_id: String, detail: String },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("example id mismatch: {left:?} vs {right:?}")]
    ExampleIdMismatch { left: String, right: String },

    #[error("{axis} index {index} out of range for {classes} classes")]
    IndexOutOfRange { axis: Axis, index: usize, classes: usize },

    #[error("row {row} is not one-hot")]
    NotOneHot { row: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("no prediction matched a ground-truth sequence")]
    NoMatchedExamples,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
