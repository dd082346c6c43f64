//! Code knowledge graph: entities (files, types, functions, variables) and
//! typed relations extracted with grammar-based parsers.

mod build;
mod model;
mod query;
mod store;

pub use build::{build_graph, BuildOutput, BuildReport, SkippedFile};
pub use model::*;
pub use query::{
    candidate_lists, keyword_candidates, neighbors, query_entities, recognized_candidates,
    split_identifier, Candidate, CandidateLists, IdentifierTokenRecognizer, MaxScoreRanker,
    Mention, MentionRecognizer, QueryScorers, Reranker, ScorerError, SimilarityScorer,
    TokenJaccard,
};
pub use store::{read_graph, write_graph, FORMAT_NAME, FORMAT_VERSION};

use crate::index::IndexError;
use crate::lang::LanguageTag;

#[derive(Debug, thiserror::Error)]
pub enum CkgError {
    #[error(transparent)]
    Index(IndexError),
    #[error("no shipped extractor matched any file for languages {languages:?}")]
    NoExtractorAvailable { languages: Vec<LanguageTag> },
    #[error("query is empty")]
    EmptyQuery,
    #[error("graph has no entities")]
    EmptyGraph,
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("every candidate list failed: {0}")]
    ScorerFailure(#[from] ScorerError),
    #[error("graph integrity violated: {0}")]
    Integrity(#[from] IntegrityError),
    #[error("graph file line {line}: {message}")]
    GraphFormat { line: usize, message: String },
    #[error("graph file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph record encoding: {0}")]
    Json(#[from] serde_json::Error),
}
