use thiserror::Error;

/// Errors raised by the mediation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("span [{start}, {end}) out of bounds for text of length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("spans overlap at [{0}, {1})")]
    OverlappingSpans(usize, usize),
    #[error("empty or degenerate span [{0}, {1})")]
    EmptySpan(usize, usize),
    #[error("vault unavailable for symbolic replacement")]
    VaultUnavailable,
    #[error("token namespace exhausted")]
    NamespaceExhausted,
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("surrogate set for {0} has fewer than two entries")]
    EmptySurrogateSet(String),
    #[error("intended surrogate `{0}` missing from surrogate set")]
    SurrogateNotInSet(String),
    #[error("keep probability {0} outside (0, 1)")]
    InvalidKeepProbability(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("undefined ratio: raw utility is zero")]
    UndefinedRatio,
    #[error("mismatched outcome shapes")]
    MismatchedOutcomes,
    #[error("incomplete manifest: {0}")]
    IncompleteManifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
