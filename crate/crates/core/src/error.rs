use std::path::PathBuf;

use chrono::NaiveDate;

/// Errors produced by the data, feature, training and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: row {row}: {reason}")]
    MalformedRow { path: PathBuf, row: usize, reason: String },
    #[error("{path}: row {row}: non-positive close {value}")]
    NonPositivePrice { path: PathBuf, row: usize, value: f64 },
    #[error("{path}: duplicate date {date}")]
    DuplicateDate { path: PathBuf, date: NaiveDate },
    #[error("ticker `{0}` not in catalog; supply the asset class explicitly")]
    UnknownTicker(String),
    #[error("bad synthetic spec: {0}")]
    BadSpec(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("span must be >= 2, got {0}")]
    BadSpan(usize),
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("gradient tape is empty")]
    TapeEmpty,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range for episode of length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("episode already finished")]
    EpisodeDone,
    #[error("empty batch")]
    EmptyBatch,
    #[error("incomplete episode: {0}")]
    IncompleteEpisode(String),
    #[error("expected {expected} environment transitions, got {got}")]
    EnvCountMismatch { expected: usize, got: usize },
    #[error("training diverged at step {step}: loss = {loss}")]
    DivergedLoss { step: u64, loss: f64 },
    #[error("portfolio has no members")]
    EmptyPortfolio,
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
