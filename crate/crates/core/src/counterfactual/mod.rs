//! Counterfactual event generation and negative-set sampling.

mod backend;
mod generate;
mod lexicon;
pub mod prompts;
mod sampling;

pub use backend::{
    stub_rewrite, BackendIdentity, HttpBackend, StubBackend, TextGenBackend, KEY_ENV, STUB_MODEL,
    URL_ENV,
};
pub use generate::{
    augment_corpus, augment_event, chunk_and_summarize, generate_counterfactual, parse_rating,
    rate_sentiment, split_chunks, target_ratings, AugmentConfig, AugmentOutcome,
    CorpusAugmentation, CounterfactualRecord, Provenance, SummaryConfig, GENERATION_TEMPERATURE,
    RATING_TEMPERATURE,
};
pub use lexicon::{rating as lexicon_rating, score as lexicon_score, POLARITY_PAIRS};
pub use sampling::{
    sample_counterfactuals, CounterfactualSet, DiverseRef, Registry, DEFAULT_IDENTICAL,
};

pub const COUNTERFACTUALS_FILE: &str = "counterfactuals.jsonl";
