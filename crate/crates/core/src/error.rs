use thiserror::Error;

/// Errors produced anywhere in the scoring, metrics, dump and harness paths.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid score set: {0}")]
    InvalidScoreSet(String),

    #[error("invalid layer logits: {0}")]
    InvalidLogits(String),

    #[error("layer index {index} out of range for {num_layers} layers")]
    LayerOutOfRange { index: usize, num_layers: usize },

    #[error("invalid layer selection: {0}")]
    InvalidSelection(String),

    #[error("weight count {weights} does not match selected layer count {layers}")]
    WeightCountMismatch { weights: usize, layers: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("expected {expected} logits, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("number of bins must be positive")]
    ZeroBins,

    #[error("degenerate labels: {correct} correct, {incorrect} incorrect (need both classes)")]
    DegenerateLabels { correct: usize, incorrect: usize },

    #[error("record `{id}` has no correctness label")]
    Unlabeled { id: String },

    #[error("answer group `{0}` is empty")]
    EmptyGroup(String),

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: record `{id}`: field `{field}`: {message}")]
    Validation {
        line: usize,
        id: String,
        field: &'static str,
        message: String,
    },

    #[error("token id {token} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Short stable identifier suitable for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScoreSet(_) => "invalid_score_set",
            Error::InvalidLogits(_) => "invalid_logits",
            Error::LayerOutOfRange { .. } => "layer_out_of_range",
            Error::InvalidSelection(_) => "invalid_selection",
            Error::WeightCountMismatch { .. } => "weight_count_mismatch",
            Error::InvalidWeights(_) => "invalid_weights",
            Error::WidthMismatch { .. } => "width_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::ConfidenceOutOfRange(_) => "confidence_out_of_range",
            Error::EmptyDataset => "empty_dataset",
            Error::ZeroBins => "zero_bins",
            Error::DegenerateLabels { .. } => "degenerate_labels",
            Error::Unlabeled { .. } => "unlabeled",
            Error::EmptyGroup(_) => "empty_group",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Io(_) => "io",
            Error::Context { source, .. } => source.kind(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
