use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CandidateEntry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticFieldSpec {
    pub name: String,
    pub definition: String,
    pub seed_terms: Vec<String>,
}

impl SemanticFieldSpec {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.definition.trim().is_empty() {
            return Err(EmbeddingError::InvalidField("definition is empty".into()));
        }
        if self.seed_terms.iter().all(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::InvalidField("no seed terms".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("line {line}: zero vector for {token:?}")]
    ZeroVector { line: usize, token: String },
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("no token of {0:?} is in the embedding table")]
    AllTokensUnknown(String),
    #[error("invalid semantic field: {0}")]
    InvalidField(String),
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Read-only token -> vector table. Lookups are case-folded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn from_vectors(
        vectors: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        let mut table = HashMap::new();
        let mut dimension = None;
        for (i, (token, v)) in vectors.into_iter().enumerate() {
            let line = i + 1;
            let expected = *dimension.get_or_insert(v.len());
            if v.len() != expected || expected == 0 {
                return Err(EmbeddingError::DimensionMismatch {
                    line,
                    expected,
                    found: v.len(),
                });
            }
            if v.iter().all(|x| *x == 0.0) {
                return Err(EmbeddingError::ZeroVector { line, token });
            }
            let key = token.to_lowercase();
            if table.insert(key, v).is_some() {
                return Err(EmbeddingError::DuplicateToken { line, token });
            }
        }
        match dimension {
            Some(dimension) => Ok(Self {
                dimension,
                vectors: table,
            }),
            None => Err(EmbeddingError::EmptyTable),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(Vec::as_slice)
    }
}

/// Parses the word2vec-style text format: an optional `count dim` header,
/// then `token f1 ... fd` per line.
pub fn load_embeddings(document: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let mut lines = document
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let mut declared_dim = None;
    if let Some((_, first)) = lines.peek() {
        let parts: Vec<&str> = first.split_whitespace().collect();
        if parts.len() == 2 && parts.iter().all(|p| p.parse::<usize>().is_ok()) {
            declared_dim = Some(parts[1].parse::<usize>().unwrap());
            lines.next();
        }
    }

    let mut table: HashMap<String, Vec<f64>> = HashMap::new();
    let mut dimension = declared_dim;
    for (line, text) in lines {
        let mut parts = text.split_whitespace();
        let token = parts.next().expect("non-empty line has a token").to_string();
        let vector = parts
            .map(|p| p.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| EmbeddingError::BadLine {
                line,
                reason: e.to_string(),
            })?;
        let expected = *dimension.get_or_insert(vector.len());
        if vector.len() != expected || expected == 0 {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                expected,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::BadLine {
                line,
                reason: "non-finite component".into(),
            });
        }
        if vector.iter().all(|x| *x == 0.0) {
            return Err(EmbeddingError::ZeroVector { line, token });
        }
        if table.insert(token.to_lowercase(), vector).is_some() {
            return Err(EmbeddingError::DuplicateToken { line, token });
        }
    }
    if table.is_empty() {
        return Err(EmbeddingError::EmptyTable);
    }
    Ok(EmbeddingTable {
        dimension: dimension.expect("non-empty table has a dimension"),
        vectors: table,
    })
}

fn mean(vectors: &[&[f64]], dimension: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dimension];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Unweighted mean of the known tokens of `phrase`.
pub fn embed_phrase(phrase: &str, table: &EmbeddingTable) -> Result<Vec<f64>, EmbeddingError> {
    let known: Vec<&[f64]> = phrase
        .split_whitespace()
        .filter_map(|t| table.get(t))
        .collect();
    if known.is_empty() {
        return Err(EmbeddingError::AllTokensUnknown(phrase.to_string()));
    }
    Ok(mean(&known, table.dimension()))
}

/// Mean of the phrase embeddings of every seed term and of the definition.
/// Parts with no known token are skipped.
pub fn field_centroid(
    field: &SemanticFieldSpec,
    table: &EmbeddingTable,
) -> Result<Vec<f64>, EmbeddingError> {
    let parts: Vec<Vec<f64>> = field
        .seed_terms
        .iter()
        .chain(std::iter::once(&field.definition))
        .filter_map(|p| embed_phrase(p, table).ok())
        .collect();
    if parts.is_empty() {
        return Err(EmbeddingError::AllTokensUnknown(field.name.clone()));
    }
    let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
    Ok(mean(&refs, table.dimension()))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub retained: Vec<CandidateEntry>,
    /// Words none of whose tokens are in the table.
    pub unknown: Vec<String>,
}

pub fn semantic_filter(
    entries: &[CandidateEntry],
    centroid: &[f64],
    table: &EmbeddingTable,
    threshold: f64,
) -> Result<FilterOutcome, EmbeddingError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EmbeddingError::InvalidThreshold(threshold));
    }
    let mut outcome = FilterOutcome::default();
    for entry in entries {
        match embed_phrase(&entry.word, table) {
            Ok(v) => {
                let similarity = cosine(&v, centroid);
                if similarity >= threshold {
                    outcome.retained.push(CandidateEntry {
                        similarity: Some(similarity),
                        ..entry.clone()
                    });
                }
            }
            Err(_) => outcome.unknown.push(entry.word.clone()),
        }
    }
    Ok(outcome)
}
