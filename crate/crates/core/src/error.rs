use std::path::PathBuf;

use thiserror::Error;

use crate::attacks::Attack;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trace {id:?} has no reference log-probs")]
    MissingReference { id: String },

    #[error("trace {id:?} has no per-position vocabulary statistics (mu/sigma)")]
    MissingVocabStats { id: String },

    #[error("trace {id:?} has empty text")]
    EmptyText { id: String },

    #[error("invalid trace {id:?}: {}", violations.join("; "))]
    InvalidTrace { id: String, violations: Vec<String> },

    #[error("invalid attack configuration: {0}")]
    InvalidAttackConfig(String),

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("invalid n-gram order {0} (must be between 1 and {max})", max = crate::toylm::MAX_ORDER)]
    InvalidOrder(usize),

    #[error("invalid smoothing constant {0} (must be finite and > 0)")]
    InvalidLambda(f64),

    #[error("token {token} at position {position} is outside the byte vocabulary")]
    TokenOutOfRange { position: usize, token: u32 },

    #[error("{0} pool is empty")]
    EmptyPool(&'static str),

    #[error("pool has kind {found}, expected {expected}")]
    WrongPoolKind { expected: String, found: String },

    #[error("no selected attack is supported by the traces ({})", skipped.iter().map(|(a, r)| format!("{a}: {r}")).collect::<Vec<_>>().join("; "))]
    IncompatibleTraces { skipped: Vec<(Attack, String)> },

    #[error("no sample is at least {prompt_len} tokens long ({skipped} skipped)")]
    NoEligibleSamples { prompt_len: usize, skipped: usize },

    #[error("duplicate report row {0:?}")]
    DuplicateRow(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid split configuration: {0}")]
    InvalidSplit(String),

    #[error("split produced an empty {0} set")]
    EmptySplit(&'static str),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            line,
            message: message.into(),
        }
    }
}
