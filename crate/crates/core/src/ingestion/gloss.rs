use std::collections::HashMap;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GlossError {
    #[error("gloss source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("invalid gloss dump: {0}")]
    BadDump(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GlossLookup {
    Gloss(String),
    /// No entry for the word: no task is generated for it.
    Discard,
}

/// Anything that can return the article text for a word.
pub trait GlossSource: Sync {
    /// `Ok(None)` means the source has no entry for `word`.
    fn article(&self, word: &str) -> Result<Option<String>, GlossError>;
}

/// JSON map `word -> article text`.
#[derive(Debug, Clone, Default)]
pub struct OfflineGlossDump {
    articles: HashMap<String, String>,
}

impl OfflineGlossDump {
    pub fn from_json(text: &str) -> Result<Self, GlossError> {
        let articles: HashMap<String, String> =
            serde_json::from_str(text).map_err(|e| GlossError::BadDump(e.to_string()))?;
        Ok(Self::from_map(articles))
    }

    pub fn from_map(articles: HashMap<String, String>) -> Self {
        Self {
            articles: articles
                .into_iter()
                .map(|(k, v)| (k.trim().to_lowercase(), v))
                .collect(),
        }
    }
}

impl GlossSource for OfflineGlossDump {
    fn article(&self, word: &str) -> Result<Option<String>, GlossError> {
        Ok(self.articles.get(&word.trim().to_lowercase()).cloned())
    }
}

/// Plain-text HTTP article endpoint. `path_template` contains `{word}`.
#[derive(Debug, Clone)]
pub struct HttpGlossSource {
    base_url: String,
    path_template: String,
    agent: ureq::Agent,
}

impl HttpGlossSource {
    pub fn new(base_url: impl Into<String>, path_template: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(20)))
            .http_status_as_error(false)
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            path_template: path_template.into(),
            agent: config.into(),
        }
    }

    pub fn url_for(&self, word: &str) -> String {
        let encoded: String = word
            .trim()
            .bytes()
            .map(|b| match b {
                b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                    (b as char).to_string()
                }
                b' ' => "_".to_string(),
                _ => format!("%{b:02X}"),
            })
            .collect();
        let path = self.path_template.replace("{word}", &encoded);
        if path.starts_with('/') {
            format!("{}{}", self.base_url, path)
        } else {
            format!("{}/{}", self.base_url, path)
        }
    }
}

impl GlossSource for HttpGlossSource {
    fn article(&self, word: &str) -> Result<Option<String>, GlossError> {
        let url = self.url_for(word);
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| GlossError::SourceUnavailable(e.to_string()))?;
        match response.status().as_u16() {
            404 | 410 => Ok(None),
            200..=299 => response
                .body_mut()
                .read_to_string()
                .map(Some)
                .map_err(|e| GlossError::SourceUnavailable(e.to_string())),
            status => Err(GlossError::SourceUnavailable(format!("{url}: HTTP {status}"))),
        }
    }
}

fn strip_parentheticals(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    for c in text.chars() {
        match c {
            '(' | '（' => depth += 1,
            ')' | '）' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(" ,", ",")
        .replace(" .", ".")
}

/// First sentence of the first paragraph, with parenthetical material removed.
pub fn first_sentence(article: &str) -> Option<String> {
    let paragraph = article
        .split("\n\n")
        .map(str::trim)
        .find(|p| !p.is_empty())?;
    let flat = strip_parentheticals(paragraph);
    let mut end = flat.len();
    for marker in [". ", "? ", "! "] {
        if let Some(i) = flat.find(marker) {
            end = end.min(i + 1);
        }
    }
    let sentence = flat[..end].trim();
    (!sentence.is_empty()).then(|| sentence.to_string())
}

pub fn fetch_gloss(word: &str, source: &dyn GlossSource) -> Result<GlossLookup, GlossError> {
    Ok(match source.article(word)?.as_deref().and_then(first_sentence) {
        Some(gloss) => GlossLookup::Gloss(gloss),
        None => GlossLookup::Discard,
    })
}

/// Looks up many words with at most `parallelism` concurrent requests.
/// Results are returned in input order.
pub fn fetch_glosses(
    words: &[String],
    source: &dyn GlossSource,
    parallelism: usize,
) -> Vec<Result<GlossLookup, GlossError>> {
    let workers = parallelism.max(1).min(words.len().max(1));
    let chunk = words.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = words
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|w| fetch_gloss(w, source))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("gloss worker panicked"))
            .collect()
    })
}
