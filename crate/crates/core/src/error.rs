use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("sensor `{0}` has no records")]
    MissingSensor(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sensor `{0}`: zero variance")]
    DegenerateSensor(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    /// An error from one stage of a multi-stage command.
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line front end:
    /// 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::Json(_) => 2,
            Error::Parse { .. }
            | Error::MissingSensor(_)
            | Error::EmptyResult(_)
            | Error::InsufficientData(_)
            | Error::DegenerateSensor(_)
            | Error::Io(_)
            | Error::Csv(_) => 3,
            Error::Degenerate(_) | Error::Contract(_) | Error::NonFinite(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
