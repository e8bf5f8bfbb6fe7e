//! Campaign lifecycle pieces: configuration, task partitioning with attention
//! checks, the three-step worker session, quality gates, aggregation of
//! task results and the per-task report.

mod gates;
mod results;
mod session;
mod tasks;

use serde::{Deserialize, Serialize};

use crate::ids::{EntryId, LanguageCode, WorkerId};
use crate::workflow::WorkflowError;

pub use gates::{acq_gate, median, timing_filter, AcqVerdict, TimingOutcome};
pub use results::{
    aggregate_task, campaign_report, derive_reverse_dataset, task_records, CampaignReport, Exclusion,
    ExclusionReason, TaskAggregate, TaskReportRow,
};
pub use session::{Candidate, Prompt, SessionInput, SessionStep, Submission, TaskCatalog, WorkerSession};
pub use tasks::{generate_tasks, parse_acq_bank, AcqItem, Microtask};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CampaignError {
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("invalid guidelines: {0}")]
    BadGuidelines(String),
    #[error("invalid ACQ bank at line {line}: {reason}")]
    BadAcqBank { line: usize, reason: String },
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error("ACQ bank has {available} items, {needed} needed per task")]
    AcqBankTooSmall { needed: usize, available: usize },
    #[error("worker has not consented")]
    NotConsented,
    #[error("session is done")]
    SessionDone,
    #[error("{input} is not valid at {step}")]
    InvalidTransition { step: String, input: String },
    #[error("new word needs a lemma")]
    EmptyNewWord,
    #[error("empty selection")]
    EmptySelection,
    #[error("{0} is not a target candidate")]
    UnknownCandidate(EntryId),
    #[error("worker {worker} has not answered every ACQ of task {task}")]
    AcqsUnanswered { worker: WorkerId, task: String },
    #[error("no responses survive the quality gates for task {0}")]
    NoSurvivingResponses(String),
    #[error("direction-1 campaign is not finalized")]
    Direction1NotFinal,
    #[error("campaign is not finalized")]
    NotFinal,
    #[error("item {0} has no final outcome")]
    UnresolvedItem(EntryId),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub source_language: LanguageCode,
    pub target_language: LanguageCode,
    /// Name of the semantic field the campaign is scoped to.
    pub field: String,
    /// Source questions per task, not counting ACQs.
    pub questions_per_task: usize,
    pub acqs_per_task: usize,
    /// Recorded, not enforced.
    pub time_budget_minutes: u32,
    pub alpha_threshold: f64,
    pub acq_pass_rate: f64,
    pub sanity_rate: f64,
    pub outlier_low_ratio: f64,
    pub outlier_high_ratio: f64,
    /// Shuffles source order before partitioning when set.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    /// Seed for sanity-row sampling.
    #[serde(default)]
    pub sheet_seed: u64,
}

impl CampaignConfig {
    pub fn new(source: LanguageCode, target: LanguageCode, field: impl Into<String>) -> Self {
        Self {
            source_language: source,
            target_language: target,
            field: field.into(),
            questions_per_task: 35,
            acqs_per_task: 3,
            time_budget_minutes: 60,
            alpha_threshold: 0.70,
            acq_pass_rate: 0.90,
            sanity_rate: 0.10,
            outlier_low_ratio: 0.25,
            outlier_high_ratio: 4.0,
            shuffle_seed: None,
            sheet_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |msg: String| Err(CampaignError::InvalidConfig(msg));
        if self.source_language == self.target_language {
            return bad("source and target language must differ".into());
        }
        if self.questions_per_task == 0 {
            return bad("questions_per_task must be positive".into());
        }
        if self.acqs_per_task < self.questions_per_task / 10 {
            return bad(format!(
                "{} questions per task need at least {} ACQs",
                self.questions_per_task,
                self.questions_per_task / 10
            ));
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold <= 1.0) {
            return bad(format!("alpha_threshold {} not in (0, 1]", self.alpha_threshold));
        }
        for (name, v) in [("acq_pass_rate", self.acq_pass_rate), ("sanity_rate", self.sanity_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} not in [0, 1]"));
            }
        }
        if !(self.outlier_low_ratio >= 0.0 && self.outlier_low_ratio <= 1.0) || self.outlier_high_ratio < 1.0 {
            return bad("outlier ratios must satisfy 0 <= low <= 1 <= high".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guideline {
    pub tip: String,
    pub answer: String,
}

/// The nine rows a new campaign starts with.
pub fn default_guidelines() -> Vec<Guideline> {
    [
        ("What is this task about?", "For each source word you decide whether the target language has a word with the same meaning."),
        ("Who can take part?", "Native speakers of the target language with a good command of the source language."),
        ("Are there any restrictions?", "Machine translation of the definitions is not allowed."),
        ("How long will it take?", "About one hour per task. Accuracy matters more than speed."),
        ("What if no target word fits?", "Answer No. The meaning is recorded as a lexical gap."),
        ("What if the right word is missing from the list?", "Choose that it is not in the list and type the word with a short definition."),
        ("What if I am not sure?", "Answer I don't know. An expert will review the word."),
        ("Is my data anonymous?", "Responses are stored and processed anonymously."),
        ("Can I stop at any time?", "Yes. You may withdraw at any time without giving a reason."),
    ]
    .into_iter()
    .map(|(tip, answer)| Guideline {
        tip: tip.into(),
        answer: answer.into(),
    })
    .collect()
}

/// Parses a `tip,answer` CSV.
pub fn parse_guidelines(text: &str) -> Result<Vec<Guideline>, CampaignError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CampaignError::BadGuidelines(e.to_string()))?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_lowercase()).collect();
    if names != ["tip", "answer"] {
        return Err(CampaignError::BadGuidelines(format!(
            "expected header tip,answer, found {}",
            names.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CampaignError::BadGuidelines(format!("line {}: {e}", i + 2)))?;
        let tip = record[0].trim();
        if tip.is_empty() {
            return Err(CampaignError::BadGuidelines(format!("line {}: empty tip", i + 2)));
        }
        out.push(Guideline {
            tip: tip.into(),
            answer: record[1].trim().into(),
        });
    }
    Ok(out)
}

pub fn guidelines_to_csv(rows: &[Guideline]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["tip", "answer"]).expect("in-memory write");
    for g in rows {
        writer.write_record([&g.tip, &g.answer]).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// One stored answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub task: String,
    pub item: EntryId,
    pub worker: WorkerId,
    pub answer: crate::agreement::AnswerCategory,
    pub duration_seconds: f64,
    pub submitted_at_ms: u64,
}
