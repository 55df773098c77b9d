use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("utterance has no tokens")]
    EmptyUtterance,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("whitening failed: covariance is rank deficient")]
    RankDeficient,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("network specs disagree: {0}")]
    SpecMismatch(String),
    #[error("objective became non-finite at iteration {0}; lower the learning rate")]
    NonFiniteLoss(usize),
    #[error("discourse state has no tokens")]
    EmptyDiscourse,
    #[error("candidate set is invalid: {0}")]
    InvalidCandidates(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("corpus contains no dialogues")]
    EmptyCorpus,
    #[error("not enough dialogues: need {needed}, have {have}")]
    NotEnoughDialogues { needed: usize, have: usize },
    #[error("rankings and instances are misaligned: {0}")]
    Misaligned(String),
    #[error("no responses to evaluate")]
    EmptyResponses,
    // not a #[source]: the message already carries it, and chained
    // reporting would print it twice
    #[error("{path}: {err}")]
    Io { path: String, err: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            err: source,
        }
    }
}
