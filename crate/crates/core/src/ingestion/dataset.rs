use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub word: String,
    pub gloss: Option<String>,
    /// Set only by [`super::semantic_filter`].
    pub similarity: Option<f64>,
}

impl CandidateEntry {
    pub fn new(word: impl Into<String>, gloss: Option<String>) -> Self {
        Self {
            word: word.into(),
            gloss,
            similarity: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("expected header `word,gloss`, found {0:?}")]
    BadHeader(String),
    #[error("malformed row on line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses a `word,gloss` CSV or TSV document. Empty gloss cells become `None`.
pub fn parse_dataset(document: &str) -> Result<Vec<CandidateEntry>, DatasetError> {
    let document = document.strip_prefix('\u{feff}').unwrap_or(document);
    let header_line = document.lines().next().unwrap_or("");
    let delimiter = detect_delimiter(header_line);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(document.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(DatasetError::BadHeader(e.to_string())),
        None => return Err(DatasetError::BadHeader(String::new())),
    };
    let names: Vec<String> = header.iter().map(|h| h.trim().to_lowercase()).collect();
    if names != ["word", "gloss"] {
        return Err(DatasetError::BadHeader(header_line.to_string()));
    }

    let mut out = Vec::new();
    for record in records {
        let record = record.map_err(|e| DatasetError::MalformedRow {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let word = record[0].trim();
        if word.is_empty() {
            return Err(DatasetError::MalformedRow {
                line,
                reason: "empty word".into(),
            });
        }
        let gloss = record[1].trim();
        out.push(CandidateEntry::new(
            word,
            (!gloss.is_empty()).then(|| gloss.to_string()),
        ));
    }
    Ok(out)
}

/// Writes entries back as `word,gloss[,similarity]` CSV.
pub fn write_dataset(entries: &[CandidateEntry]) -> String {
    let with_similarity = entries.iter().any(|e| e.similarity.is_some());
    let mut writer = csv::Writer::from_writer(Vec::new());
    if with_similarity {
        writer.write_record(["word", "gloss", "similarity"]).unwrap();
    } else {
        writer.write_record(["word", "gloss"]).unwrap();
    }
    for e in entries {
        let gloss = e.gloss.clone().unwrap_or_default();
        if with_similarity {
            let sim = e.similarity.map(|s| format!("{s:.4}")).unwrap_or_default();
            writer.write_record([e.word.as_str(), gloss.as_str(), sim.as_str()]).unwrap();
        } else {
            writer.write_record([e.word.as_str(), gloss.as_str()]).unwrap();
        }
    }
    String::from_utf8(writer.into_inner().unwrap()).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv_and_tsv() {
        let rows = parse_dataset("word,gloss\ncider,fermented apple drink\nbanana,\"a long, curved fruit\"\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].gloss.as_deref(), Some("a long, curved fruit"));

        let rows = parse_dataset("word\tgloss\nخبز\tbread\nتمر\t\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].gloss, None);
    }

    #[test]
    fn header_only_gives_empty_list() {
        assert!(parse_dataset("word,gloss\n").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_rows_and_headers() {
        match parse_dataset("word,gloss\ncider,apple drink\nbanana\n") {
            Err(DatasetError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_dataset("word,gloss\n ,orphan gloss\n"),
            Err(DatasetError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(parse_dataset("lemma,definition\n"), Err(DatasetError::BadHeader(_))));
        assert!(matches!(parse_dataset(""), Err(DatasetError::BadHeader(_))));
    }

    #[test]
    fn write_then_parse() {
        let entries = vec![
            CandidateEntry::new("a", Some("x, y".into())),
            CandidateEntry::new("b", None),
        ];
        assert_eq!(parse_dataset(&write_dataset(&entries)).unwrap(), entries);
    }
}
