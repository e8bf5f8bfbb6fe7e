//! LLM-as-annotator baseline: prompt construction, completion parsing,
//! replayable clients and scoring against an expert sheet.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::AnswerCategory;
use crate::ids::{EntryId, WorkerId};
use crate::lexicon::LexicalEntry;
use crate::text::normalize_lemma;
use crate::workflow::{ExpertDecision, ExpertSheetRow, RowKind};

pub const PROMPT_VERSION: &str = "lexgap-annotate/1";
pub const MAX_BATCH: usize = 50;
/// Candidates listed per prompt; larger catalogs are split across prompts.
pub const MAX_CATALOG_CHUNK: usize = 400;

pub const ENV_BASE_URL: &str = "LEXGAP_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "LEXGAP_LLM_API_KEY";
pub const ENV_MODEL: &str = "LEXGAP_LLM_MODEL";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("batch has {0} entries, at most {MAX_BATCH} allowed")]
    BatchTooLarge(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("completion line {0} refers to no item of the batch")]
    Parse(usize),
    #[error("no recorded completion for prompt {0}")]
    FixtureMissing(String),
    #[error("bad fixture file: {0}")]
    BadFixture(String),
    #[error("annotation for {0} has no expert verdict")]
    UnmatchedAnnotation(EntryId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBatch {
    pub batch_id: String,
    pub source_language: String,
    pub target_language: String,
    pub field: String,
    pub entries: Vec<LexicalEntry>,
    pub catalog: Vec<LexicalEntry>,
}

impl AnnotationBatch {
    pub fn check(&self) -> Result<(), LlmError> {
        match self.entries.len() {
            0 => Err(LlmError::EmptyBatch),
            n if n > MAX_BATCH => Err(LlmError::BatchTooLarge(n)),
            _ => Ok(()),
        }
    }
}

/// Splits `entries` into batches of at most [`MAX_BATCH`].
pub fn make_batches(
    prefix: &str,
    entries: &[LexicalEntry],
    catalog: &[LexicalEntry],
    source_language: &str,
    target_language: &str,
    field: &str,
) -> Vec<AnnotationBatch> {
    entries
        .chunks(MAX_BATCH)
        .enumerate()
        .map(|(i, chunk)| AnnotationBatch {
            batch_id: format!("{prefix}-{}", i + 1),
            source_language: source_language.into(),
            target_language: target_language.into(),
            field: field.into(),
            entries: chunk.to_vec(),
            catalog: catalog.to_vec(),
        })
        .collect()
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One prompt per catalog chunk. Deterministic in the batch.
pub fn build_prompts(batch: &AnnotationBatch) -> Result<Vec<String>, LlmError> {
    batch.check()?;
    let chunks: Vec<&[LexicalEntry]> = if batch.catalog.is_empty() {
        vec![&[]]
    } else {
        batch.catalog.chunks(MAX_CATALOG_CHUNK).collect()
    };
    let parts = chunks.len();
    let (src, tgt) = (&batch.source_language, &batch.target_language);
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(k, chunk)| {
            let mut p = String::new();
            p.push_str(&format!("[{PROMPT_VERSION}]\n"));
            p.push_str(&format!(
                "You are annotating a bilingual lexicon for the semantic field \"{}\".\n",
                one_line(&batch.field)
            ));
            p.push_str(&format!(
                "For every numbered {src} word below, decide whether {tgt} has a single word with the same meaning.\n"
            ));
            p.push_str(&format!(
                "Pick the {tgt} word from the candidate list when one fits. When none fits but {tgt} has such a word, write that word. When {tgt} has no single word for the meaning, answer GAP.\n\n"
            ));
            p.push_str(&format!("{tgt} candidates (part {} of {parts}):\n", k + 1));
            for c in chunk {
                p.push_str(&format!("- {}: {}\n", one_line(&c.word), one_line(&c.gloss)));
            }
            p.push_str(&format!("\n{src} words:\n"));
            for (i, e) in batch.entries.iter().enumerate() {
                p.push_str(&format!("{}. {}: {}\n", i + 1, one_line(&e.word), one_line(&e.gloss)));
            }
            p.push_str("\nReply with exactly one line per numbered word, in order, and nothing else:\n");
            p.push_str("<index>. EQUIVALENT: <word>\n<index>. GAP\n");
            p
        })
        .collect())
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Equivalent { target: EntryId, word: String },
    NewWordProposal { word: String },
    Gap,
    /// No usable line for the item.
    Unparseable,
}

impl Verdict {
    pub fn answer(&self) -> AnswerCategory {
        match self {
            Verdict::Equivalent { target, .. } => AnswerCategory::equivalent([target.clone()]),
            Verdict::NewWordProposal { word } => AnswerCategory::new_word(word, ""),
            Verdict::Gap => AnswerCategory::Gap,
            Verdict::Unparseable => AnswerCategory::DontKnow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmAnnotation {
    pub entry: EntryId,
    pub verdict: Verdict,
    pub raw: String,
}

fn line_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d+)\s*[.)]\s*(.*?)\s*$").expect("valid regex"))
}

fn verdict_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(?:\*\*)?(?:(GAP)|EQUIVALENT\s*:\s*(.+?))(?:\*\*)?\.?$").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Raw {
    Gap,
    Word(String),
    Bad,
}

/// Parses one completion. Lines not starting with an index are ignored;
/// indexed lines that break the contract mark their item unparseable.
fn parse_lines(text: &str, n: usize) -> Result<BTreeMap<usize, (Raw, String)>, LlmError> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let Some(caps) = line_pattern().captures(line) else {
            continue;
        };
        let index: usize = caps[1].parse().map_err(|_| LlmError::Parse(no + 1))?;
        if index == 0 || index > n {
            return Err(LlmError::Parse(no + 1));
        }
        let body = &caps[2];
        let raw = match verdict_pattern().captures(body) {
            Some(v) if v.get(1).is_some() => Raw::Gap,
            Some(v) => {
                let word = v[2].trim().trim_matches(|c: char| c == '"' || c == '\'').trim();
                if word.is_empty() {
                    Raw::Bad
                } else {
                    Raw::Word(word.to_string())
                }
            }
            None => Raw::Bad,
        };
        out.entry(index).or_insert((raw, line.trim().to_string()));
    }
    Ok(out)
}

/// One annotation per batch entry from the completions of [`build_prompts`].
pub fn parse_completions(batch: &AnnotationBatch, completions: &[String]) -> Result<Vec<LlmAnnotation>, LlmError> {
    batch.check()?;
    let n = batch.entries.len();
    let parsed: Vec<BTreeMap<usize, (Raw, String)>> =
        completions.iter().map(|c| parse_lines(c, n)).collect::<Result<_, _>>()?;
    let catalog: BTreeMap<String, &LexicalEntry> = batch
        .catalog
        .iter()
        .rev()
        .map(|e| (normalize_lemma(&e.word), e))
        .collect();

    let mut out = Vec::with_capacity(n);
    for (i, entry) in batch.entries.iter().enumerate() {
        let lines: Vec<&(Raw, String)> = parsed.iter().filter_map(|p| p.get(&(i + 1))).collect();
        let raw = lines.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join("\n");
        let words: Vec<&String> = lines
            .iter()
            .filter_map(|(r, _)| match r {
                Raw::Word(w) => Some(w),
                _ => None,
            })
            .collect();
        let verdict = if let Some(hit) = words.iter().find_map(|w| catalog.get(&normalize_lemma(w))) {
            Verdict::Equivalent {
                target: hit.id.clone(),
                word: hit.word.clone(),
            }
        } else if let Some(w) = words.first() {
            Verdict::NewWordProposal { word: (*w).clone() }
        } else if lines.iter().any(|(r, _)| *r == Raw::Gap) {
            Verdict::Gap
        } else {
            Verdict::Unparseable
        };
        out.push(LlmAnnotation {
            entry: entry.id.clone(),
            verdict,
            raw,
        });
    }
    Ok(out)
}

pub trait CompletionClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

pub fn annotate_batch(batch: &AnnotationBatch, client: &dyn CompletionClient) -> Result<Vec<LlmAnnotation>, LlmError> {
    let completions = build_prompts(batch)?
        .iter()
        .map(|p| client.complete(p))
        .collect::<Result<Vec<_>, _>>()?;
    parse_completions(batch, &completions)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub prompt_hash: String,
    pub completion_text: String,
}

/// Serves recorded completions keyed by prompt hash. Never touches the network.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    records: BTreeMap<String, String>,
}

impl ReplayClient {
    pub fn new(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.prompt_hash, r.completion_text)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let records: Vec<FixtureRecord> = serde_json::from_str(text).map_err(|e| LlmError::BadFixture(e.to_string()))?;
        Ok(Self::new(records))
    }

    pub fn record(&mut self, prompt: &str, completion: impl Into<String>) {
        self.records.insert(prompt_hash(prompt), completion.into());
    }

    pub fn to_json(&self) -> String {
        let records: Vec<FixtureRecord> = self
            .records
            .iter()
            .map(|(h, c)| FixtureRecord {
                prompt_hash: h.clone(),
                completion_text: c.clone(),
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("fixture serializes")
    }
}

impl CompletionClient for ReplayClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        self.records.get(&hash).cloned().ok_or(LlmError::FixtureMissing(hash))
    }
}

/// Chat-completion style HTTP endpoint.
#[derive(Debug, Clone)]
pub struct LiveClient {
    base_url: String,
    api_key: String,
    model: String,
    agent: ureq::Agent,
}

impl LiveClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Result<Self, LlmError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(LlmError::Transport("API key is empty".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            agent,
        })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let key = var(ENV_API_KEY).ok_or_else(|| LlmError::Transport(format!("{ENV_API_KEY} is not set")))?;
        let base = var(ENV_BASE_URL).ok_or_else(|| LlmError::Transport(format!("{ENV_BASE_URL} is not set")))?;
        let model = var(ENV_MODEL).unwrap_or_else(|| "gpt-4".into());
        Self::new(base, key, model)
    }
}

impl CompletionClient for LiveClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut response = self
            .agent
            .post(&format!("{}/chat/completions", self.base_url))
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response has no message content".into()))
    }
}

pub const LLM_WORKER: &str = "llm";

/// Sheet rows for expert review of the model's verdicts, one per entry.
pub fn annotation_sheet(annotations: &[LlmAnnotation], sources: &[LexicalEntry]) -> Vec<ExpertSheetRow> {
    let by_id: BTreeMap<&EntryId, &LexicalEntry> = sources.iter().map(|e| (&e.id, e)).collect();
    annotations
        .iter()
        .map(|a| {
            let (lemma, gloss) = by_id
                .get(&a.entry)
                .map(|e| (e.word.clone(), e.gloss.clone()))
                .unwrap_or_else(|| (a.entry.to_string(), String::new()));
            let answer = a.verdict.answer();
            let row_kind = if answer == AnswerCategory::DontKnow {
                RowKind::Dontknow
            } else {
                RowKind::Disputed
            };
            ExpertSheetRow {
                item: a.entry.clone(),
                worker_id: WorkerId::new(LLM_WORKER),
                source_lemma: lemma,
                source_gloss: gloss,
                worker_answer: answer,
                row_kind,
                expert_decision: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub wrong_word: usize,
    /// A word was offered where the expert records a gap.
    pub literal_translation: usize,
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub errors: ErrorBreakdown,
}

/// Scores annotations against reviewed sheet rows. A verdict is correct
/// when the expert confirms it as is.
pub fn evaluate_accuracy(annotations: &[LlmAnnotation], reviewed: &[ExpertSheetRow]) -> Result<AccuracyReport, LlmError> {
    let decisions: BTreeMap<&EntryId, Option<&ExpertDecision>> = reviewed
        .iter()
        .filter(|r| r.row_kind != RowKind::Sanity)
        .map(|r| (&r.item, r.expert_decision.as_ref()))
        .collect();
    let mut seen = BTreeSet::new();
    let mut correct = 0;
    let mut errors = ErrorBreakdown::default();
    for a in annotations {
        if !seen.insert(&a.entry) {
            continue;
        }
        let decision = decisions
            .get(&a.entry)
            .copied()
            .flatten()
            .ok_or_else(|| LlmError::UnmatchedAnnotation(a.entry.clone()))?;
        let offered_word = matches!(a.verdict, Verdict::Equivalent { .. } | Verdict::NewWordProposal { .. });
        match (decision, offered_word) {
            (ExpertDecision::ConfirmWord, true) => correct += 1,
            (ExpertDecision::ConfirmGap, false) if a.verdict == Verdict::Gap => correct += 1,
            (ExpertDecision::CorrectWord { .. }, true) => errors.wrong_word += 1,
            (ExpertDecision::ConfirmGap, true) => errors.literal_translation += 1,
            _ => errors.other += 1,
        }
    }
    let total = seen.len();
    Ok(AccuracyReport {
        correct,
        total,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        errors,
    })
}
