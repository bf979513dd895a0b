//! Building blocks for auditing how much a text corpus leaks a binary
//! sensitive attribute, and whether a text transformation reduces it.
//!
//! The workflow is: ingest and filter a corpus ([`corpus`]), turn text into
//! sparse features ([`features`]), train proxy classifiers that try to recover
//! the attribute ([`classifiers`]), rewrite the text through a transformer
//! ([`transform`]), check that sentiment survived ([`sentiment`]) and compare
//! the paired predictions before and after ([`stats`]).

pub mod classifiers;
pub mod corpus;
pub mod features;
pub mod rng;
pub mod sentiment;
pub mod stats;
pub mod transform;

pub use classifiers::{
    evaluate, grid_search, EvalReport, GridSpec, Hyperparams, ModelKind, NbModel, RfModel,
    TrainedModel,
};
pub use corpus::{Corpus, Document, GroupLabel, GroupNames, RawCorpus, SplitSpec};
pub use features::{FeatureMatrix, ImportanceRanking, Tokenizer, Vocabulary, Weighting};
pub use sentiment::{Engine, PreservationReport, SentimentLexicon, SentimentScore};
pub use stats::{mcnemar, McNemarResult, SeedSweepSummary};
pub use transform::{PromptTemplate, TransformCache, TransformRecord, Transformer};
