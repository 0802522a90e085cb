use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("future window: window end {end} is after as-of date {as_of}")]
    FutureWindow { end: NaiveDate, as_of: NaiveDate },

    #[error("invalid window: start {start} is after end {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },

    #[error("label window exceeds data horizon: need data through {needed}, horizon is {horizon}")]
    LabelHorizon { needed: NaiveDate, horizon: NaiveDate },

    #[error("degenerate labels: training data needs at least one positive and one negative row")]
    DegenerateLabels,

    #[error("schema mismatch: model was fitted on schema {expected}, matrix has {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown parameter `{param}` for model family {family}")]
    UnknownParam { family: String, param: String },

    #[error("{0} is not implemented")]
    NotImplemented(String),

    #[error("k = {k} exceeds the number of ranked entries ({n})")]
    KTooLarge { k: usize, n: usize },

    #[error("insufficient date range: {0}")]
    InsufficientRange(String),

    #[error("empty arm: {0}")]
    EmptyArm(String),

    #[error("all splits are excluded from model selection")]
    AllSplitsExcluded,

    #[error("missing {what}: {path}")]
    MissingArtifact { what: String, path: String },

    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
