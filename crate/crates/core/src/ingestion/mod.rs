//! Building per-language input datasets for a semantic field.
//!
//! Candidate words come from tabular dictionaries; glosses come from the
//! dataset or from a gloss source; membership in the semantic field is
//! decided by cosine similarity against a centroid built from the field's
//! definition and seed terms.

mod dataset;
mod embeddings;
mod gloss;

pub use dataset::{parse_dataset, write_dataset, CandidateEntry, DatasetError};
pub use embeddings::{
    cosine, embed_phrase, field_centroid, load_embeddings, semantic_filter, EmbeddingError,
    EmbeddingTable, FilterOutcome, SemanticFieldSpec,
};
pub use gloss::{
    fetch_gloss, fetch_glosses, first_sentence, GlossError, GlossLookup, GlossSource,
    HttpGlossSource, OfflineGlossDump,
};
