use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rating {value} outside [0, {max}]")]
    OutOfRangeRating { value: i64, max: u8 },

    #[error("invalid emotion vector: {0}")]
    InvalidVector(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("emotional class {value} outside [1, {k}]")]
    InvalidClass { value: usize, k: usize },

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("responses share no stimulus key")]
    NoSharedStimuli,

    #[error("duplicate response for candidate {candidate} on ({stimulus}, {variant}, {context})")]
    DuplicateResponse {
        candidate: String,
        stimulus: String,
        variant: String,
        context: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown context `{0}`")]
    UnknownContext(String),

    #[error("no feature or word resolved to an emotion profile")]
    MissingProfile,

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("no responses supplied")]
    EmptyResponses,

    #[error("need at least {needed} candidates, have {have}")]
    TooFewCandidates { needed: usize, have: usize },

    #[error("cluster model has no medoids")]
    EmptyModel,

    #[error("medoid `{0}` has no emotion profile attached")]
    MissingMedoidProfile(String),

    #[error("slot `{slot}` has no vocabulary in context `{context}`")]
    EmptySlotVocabulary { slot: String, context: String },

    #[error("no mapped category for feature kind `{0}`")]
    NoMappedCategory(String),

    #[error("lexicon supports only {available} distinguishable variants, {requested} requested")]
    InsufficientVocabulary { requested: usize, available: usize },

    #[error("item set is empty")]
    EmptyItemSet,

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("rank comparison is empty")]
    EmptyComparison,

    #[error("candidate `{0}` has no class")]
    UnclassifiedCandidate(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("storage error")]
    Storage(#[from] std::io::Error),

    #[error("lexicon unavailable")]
    LexiconUnavailable,

    #[error("candidate `{0}` already has an active session")]
    DuplicateActiveSession(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session `{0}` is not active")]
    SessionNotActive(String),

    #[error("ratings must cover exactly the presented variants: {0}")]
    IncompleteRatings(String),

    #[error("unknown candidate `{0}`")]
    UnknownCandidate(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// Stable snake_case identifier for wire formats.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::OutOfRangeRating { .. } => "out_of_range_rating",
            Error::InvalidVector(_) => "invalid_vector",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidClass { .. } => "invalid_class",
            Error::InvalidResponse(_) => "invalid_response",
            Error::NoSharedStimuli => "no_shared_stimuli",
            Error::DuplicateResponse { .. } => "duplicate_response",
            Error::Parse(_) => "parse_error",
            Error::Validation(_) => "validation_error",
            Error::UnknownContext(_) => "unknown_context",
            Error::MissingProfile => "missing_profile",
            Error::UnknownVariant(_) => "unknown_variant",
            Error::EmptyResponses => "empty_responses",
            Error::TooFewCandidates { .. } => "too_few_candidates",
            Error::EmptyModel => "empty_model",
            Error::MissingMedoidProfile(_) => "missing_medoid_profile",
            Error::EmptySlotVocabulary { .. } => "empty_slot_vocabulary",
            Error::NoMappedCategory(_) => "no_mapped_category",
            Error::InsufficientVocabulary { .. } => "insufficient_vocabulary",
            Error::EmptyItemSet => "empty_item_set",
            Error::UnknownItem(_) => "unknown_item",
            Error::EmptyComparison => "empty_comparison",
            Error::UnclassifiedCandidate(_) => "unclassified_candidate",
            Error::InvalidParams(_) => "invalid_params",
            Error::Storage(_) => "storage_error",
            Error::LexiconUnavailable => "lexicon_unavailable",
            Error::DuplicateActiveSession(_) => "duplicate_active_session",
            Error::UnknownSession(_) => "unknown_session",
            Error::SessionNotActive(_) => "session_not_active",
            Error::IncompleteRatings(_) => "incomplete_ratings",
            Error::UnknownCandidate(_) => "unknown_candidate",
        }
    }
}
