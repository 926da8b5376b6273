use std::path::PathBuf;

use crate::seqmodel::Sentence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown source sentence {0:?}")]
    UnknownSource(Vec<u32>),

    #[error("prefix of length {len} exceeds the maximum target length {max_len}")]
    PrefixTooLong { len: usize, max_len: usize },

    #[error("support too large: more than {budget} nodes would be expanded")]
    SupportTooLarge { budget: u64 },

    #[error("exact search exceeded its node budget of {budget} expansions")]
    BudgetExceeded {
        budget: u64,
        best_so_far: Option<(Sentence, f64)>,
    },

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialisation error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidInput(_)
            | Error::UnknownSource(_)
            | Error::EmptySampleSet
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::SupportTooLarge { .. } | Error::BudgetExceeded { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::PrefixTooLong { .. } | Error::Invariant(_) => 4,
        }
    }
}
