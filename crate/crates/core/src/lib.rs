//! Engine for discovering cross-lingual lexical gaps and equivalent terms.

pub mod agreement;
pub mod campaign;
pub mod ids;
pub mod ingestion;
pub mod lexicon;
pub mod text;
pub mod llm;
pub mod platform;
pub mod sim;
pub mod workflow;
