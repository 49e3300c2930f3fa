use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown event `{0}`")]
    UnknownEvent(String),

    #[error("hierarchy cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),

    #[error("event `{child}` has multiple parents: `{first}` and `{second}`")]
    MultipleParents {
        child: String,
        first: String,
        second: String,
    },

    #[error("ancestor chain starting at `{event}` has {depth} edges, exceeding max height {max_height}")]
    HeightExceeded {
        event: String,
        depth: usize,
        max_height: usize,
    },

    #[error("relation edge `{0}` points to itself")]
    SelfLoop(String),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("invalid mention `{id}`: {reason}")]
    InvalidMention { id: String, reason: String },

    #[error("knowledge base is empty")]
    EmptyKb,

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("event `{event}` has no label in `{language}` or the fallback language")]
    MissingLabel { event: String, language: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("training split contains no mentions")]
    EmptyTrainSplit,

    #[error("strategy requires hierarchy edges but the forest has none")]
    NoHierarchyEdges,

    #[error("k = {k} exceeds the candidate pool size {pool}")]
    KTooLarge { k: usize, pool: usize },

    #[error("no retrievals to train on")]
    EmptyRetrievals,

    #[error("gold set of mention `{mention}` has {gold} events but only {k} candidate slots")]
    GoldExceedsK { mention: String, gold: usize, k: usize },

    #[error("no evaluation records")]
    EmptyRecords,

    #[error("h score undefined: event `{0}` has no linked mentions")]
    UndefinedScore(String),

    #[error("{loss} gradient check failed: max relative error {error:.3e} exceeds {tolerance:.0e}")]
    GradientMismatch {
        loss: String,
        error: f64,
        tolerance: f64,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss; lower the learning rate")]
    Diverged { epoch: usize },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Stable machine-readable name used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownEvent(_) => "UnknownEvent",
            Error::CycleDetected(_) => "CycleDetected",
            Error::MultipleParents { .. } => "MultipleParents",
            Error::HeightExceeded { .. } => "HeightExceeded",
            Error::SelfLoop(_) => "SelfLoop",
            Error::InvalidEvent(_) => "InvalidEvent",
            Error::InvalidMention { .. } => "InvalidMention",
            Error::EmptyKb => "EmptyKB",
            Error::InvalidRatios(_) => "InvalidRatios",
            Error::InvalidConfig(_) => "ConfigError",
            Error::MissingLabel { .. } => "MissingLabel",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyBatch => "EmptyBatch",
            Error::EmptyTrainSplit => "EmptyTrainSplit",
            Error::NoHierarchyEdges => "NoHierarchyEdges",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::EmptyRetrievals => "EmptyRetrievals",
            Error::GoldExceedsK { .. } => "GoldExceedsK",
            Error::EmptyRecords => "EmptyRecords",
            Error::UndefinedScore(_) => "UndefinedScore",
            Error::Diverged { .. } => "Diverged",
            Error::GradientMismatch { .. } => "GradientMismatch",
            Error::Parse { .. } => "ParseError",
            Error::Checkpoint(_) => "CheckpointError",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "ParseError",
        }
    }
}
