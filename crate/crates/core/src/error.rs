use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("invariant violated at line {line}: {reason}")]
    InvariantViolation { line: usize, reason: String },

    #[error("duplicate timestamp {date} {time}")]
    DuplicateTimestamp { date: chrono::NaiveDate, time: String },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("series is empty")]
    EmptySeries,

    #[error("training data is empty")]
    EmptyTrain,

    #[error("design is rank deficient: {0}")]
    RankDeficient(String),

    #[error("only one class present in the labels")]
    SingleClass,

    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("too few weeks: need at least {needed}, got {got}")]
    TooFewWeeks { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("all residuals are zero")]
    AllZeroResiduals,

    #[error("config error: {0}")]
    Config(String),

    #[error("{model}: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_model(self, model: &str) -> Error {
        Error::Model {
            model: model.to_string(),
            source: Box::new(self),
        }
    }
}
