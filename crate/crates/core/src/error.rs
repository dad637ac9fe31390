use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("cannot tokenize {word:?}: no token matches at {offending:?}")]
    Tokenize { word: String, offending: char },
    #[error("token index {index} out of range for vocabulary of size {size}")]
    TokenRange { index: usize, size: usize },
    #[error("frame {frame} out of range for {frames} frames")]
    FrameRange { frame: usize, frames: usize },
    #[error("invalid entity span ({start}, {end}) for sequence of length {len}")]
    Span {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("name list contains an empty name at line {0}")]
    EmptyName(usize),
    #[error("all emission logits are -inf")]
    DegenerateDistribution,
    #[error("name {0:?} has no prior probability")]
    MissingPrior(Vec<usize>),
    #[error("token {0} is not in the language model inventory")]
    Inventory(String),
    #[error("encoder scores must have at least one frame")]
    EmptyInput,
    #[error("enumeration guard exceeded: T+U = {0} > 16")]
    OracleScale(usize),
    #[error("utterance count mismatch: {refs} references vs {hyps} hypotheses")]
    Pairing { refs: usize, hyps: usize },
    #[error("entity mode 'spans' requires hypotheses carrying name spans")]
    EntityMode,
    #[error("invalid generation spec: {0}")]
    GenSpec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("vocabulary hash mismatch: {expected} vs {found}")]
    VocabHash { expected: String, found: String },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
