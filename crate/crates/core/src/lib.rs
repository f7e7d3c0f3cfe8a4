//! Gender-association measurement for word embeddings.
//!
//! The pipeline: build parallel corpora ([`corpus`]), optionally lemmatize
//! and scrub grammatical gender from them, train CBOW embeddings
//! ([`trainer`]), and measure associations between target and attribute word
//! sets ([`stimuli`]) with the Word Embedding Association Test ([`weat`]).
//! [`report`] renders the aggregated results.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod report;
pub mod stimuli;
pub mod trainer;
pub mod weat;

pub use embedding::{CorpusVersion, EmbeddingMeta, EmbeddingSet, OovPolicy};
pub use error::{Error, ErrorKind, Result};
pub use stimuli::{BalancedDesign, Stimuli, StimulusSpec, WordSet};
pub use trainer::TrainingConfig;
pub use weat::{AggregateResult, WeatConfig, WeatInput, WeatResult};
