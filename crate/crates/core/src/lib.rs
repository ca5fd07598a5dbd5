//! Emotion-aware reader profiling and personalization.
//!
//! Readers rate variants of a stimulus (an advertisement or headline rendered
//! with different colors, backgrounds and words). From those ratings the crate
//! derives a personality vector and an emotion vector per reader, clusters
//! readers into emotional classes by an affinity index, embeds emotions into
//! headlines by word and feature selection, and ranks items per reader.
//!
//! Modules:
//! - [`affinity`]: candidate and profile affinity indices
//! - [`lexicon`]: emotion taxonomy, word clusters, feature profiles
//! - [`learning`]: PV/EV derivation, k-medoids clustering, classification
//! - [`embedding`]: headline word selection, feature selection, variant sets
//! - [`ranking`]: per-reader item ordering
//! - [`evaluation`]: metrics, synthetic populations, experiment runner
//! - [`datastore`]: file formats and atomic storage
//! - [`service`]: elicitation sessions and recommendations

pub mod affinity;
pub mod config;
pub mod datastore;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod learning;
pub mod lexicon;
pub mod ranking;
pub mod service;
pub mod types;

pub use affinity::{candidate_affinity, profile_affinity, ResponseSet};
pub use config::EngineConfig;
pub use datastore::{bundled_fixtures, load_table_fixtures, FixtureBundle, ProfileStore};
pub use embedding::{embed_headline, generate_variant_set, select_features, EmbeddedVariant, HeadlineTemplate, RoundPolicy};
pub use error::{Error, Result};
pub use evaluation::{
    class_accuracy, exact_match_rate, generate_population, run_experiment, AccuracyReport, ExperimentReport,
    RankComparison, SyntheticPopulation,
};
pub use learning::{
    build_profile, classify_profile, classify_responses, cluster_candidates, derive_emotion_vector,
    derive_personality_vector, CandidateProfile, ClusterModel, VariantCatalog,
};
pub use lexicon::{load_lexicon, variant_profile, words_for_cluster, Lexicon};
pub use ranking::{expected_rank, rank_items, RankedItem};
pub use service::{ElicitationService, ServiceConfig, SubmitOutcome};
pub use types::{
    EmotionVector, EmotionalClass, FeatureKind, PersonalityVector, Rating, ResponseExpression, VariantFeatures,
};
