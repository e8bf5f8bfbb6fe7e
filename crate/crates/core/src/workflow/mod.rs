//! Crowd filtering and crowdsourced-data validation driven by Krippendorff's
//! alpha, consensus aggregation, and the expert-validation sheet.
//!
//! Both classification procedures are resumable state machines: they name the
//! participant set of the next run and wait for its responses. The blocking
//! drivers [`filter_crowd`] and [`validate_responses`] feed them from a
//! [`TaskRunner`]; the live platform feeds them as human re-runs complete.

mod crowd;
mod expert;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agreement::{
    encode_responses, krippendorff_alpha, AgreementError, Alpha, AnswerCategory, CategoryKey,
};
use crate::ids::{EntryId, WorkerId};

pub use crowd::{
    disputed_items, filter_crowd, validate_responses, CrowdFilter, DataValidation, QueueReason, QueuedItem,
    RunRecord, Step, ValidationOutcome,
};
pub use expert::{
    apply_expert_decisions, export_expert_sheet, parse_expert_sheet, sheet_to_csv, EntryRef,
    ExpertDecision, ExpertSheet, ExpertSheetRow, FinalOutcome, FinalRecord, RecordProvenance,
    RowKind, SheetItem, SHEET_COLUMNS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error("subset size {k} out of range for {n} workers")]
    KOutOfRange { k: usize, n: usize },
    #[error("task runner failed: {0}")]
    RunnerFailure(String),
    #[error("invalid worker group: {0}")]
    InvalidGroup(String),
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("run {run_id} was executed by {got:?}, expected {expected:?}")]
    ParticipantMismatch {
        run_id: String,
        expected: Vec<WorkerId>,
        got: Vec<WorkerId>,
    },
    #[error("run {run_id} contains a response by non-participant {worker}")]
    ForeignResponse { run_id: String, worker: WorkerId },
    #[error("procedure already finished")]
    AlreadyFinished,
    #[error("every response is DontKnow")]
    AllDontKnow,
    #[error("sanity rate must be in [0, 1], got {0}")]
    InvalidSanityRate(f64),
    #[error("row {row}: missing expert decision")]
    MissingDecision { row: usize },
    #[error("row {row}: decision {decision} does not apply to answer {answer}")]
    InvalidDecision {
        row: usize,
        decision: String,
        answer: String,
    },
    #[error("conflicting expert decisions for item {0}")]
    ConflictingDecisions(EntryId),
    #[error("malformed expert sheet at line {line}: {reason}")]
    MalformedSheet { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerRole {
    Candidate,
    Qualified,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerStatus {
    Active,
    LowQuality,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Worker {
    pub id: WorkerId,
    pub role: WorkerRole,
    pub status: WorkerStatus,
}

impl Worker {
    pub fn new(id: impl Into<WorkerId>, role: WorkerRole) -> Self {
        Self {
            id: id.into(),
            role,
            status: WorkerStatus::Active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub item: EntryId,
    pub worker: WorkerId,
    pub answer: AnswerCategory,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub run_id: String,
    pub participants: Vec<WorkerId>,
    pub responses: Vec<RunResponse>,
}

impl TaskRun {
    pub fn check(&self) -> Result<(), WorkflowError> {
        for r in &self.responses {
            if !self.participants.contains(&r.worker) {
                return Err(WorkflowError::ForeignResponse {
                    run_id: self.run_id.clone(),
                    worker: r.worker.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> Result<Alpha, AgreementError> {
        let triples: Vec<_> = self
            .responses
            .iter()
            .map(|r| (r.item.clone(), r.worker.clone(), r.answer.clone()))
            .collect();
        krippendorff_alpha(&encode_responses(&triples)?)
    }

    /// Responses grouped by item, in first-appearance order.
    pub fn by_item(&self) -> Vec<(EntryId, Vec<(WorkerId, AnswerCategory)>)> {
        let mut order: Vec<EntryId> = Vec::new();
        let mut map: BTreeMap<EntryId, Vec<(WorkerId, AnswerCategory)>> = BTreeMap::new();
        for r in &self.responses {
            let slot = map.entry(r.item.clone()).or_insert_with(|| {
                order.push(r.item.clone());
                Vec::new()
            });
            slot.push((r.worker.clone(), r.answer.clone()));
        }
        order
            .into_iter()
            .map(|item| {
                let responses = map.remove(&item).unwrap_or_default();
                (item, responses)
            })
            .collect()
    }
}

/// Executes a task for a participant set and returns its responses.
pub trait TaskRunner {
    fn run(&mut self, participants: &[WorkerId]) -> Result<TaskRun, WorkflowError>;
}

impl<F> TaskRunner for F
where
    F: FnMut(&[WorkerId]) -> Result<TaskRun, WorkflowError>,
{
    fn run(&mut self, participants: &[WorkerId]) -> Result<TaskRun, WorkflowError> {
        self(participants)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub high_quality: BTreeSet<WorkerId>,
    pub low_quality: BTreeSet<WorkerId>,
    pub runs_executed: Vec<String>,
    pub passing_alpha: Option<Alpha>,
}

/// All `C(n, k)` subsets of `workers`, lexicographic by member index.
pub fn combinations<T: Clone>(workers: &[T], k: usize) -> Result<Vec<Vec<T>>, WorkflowError> {
    let n = workers.len();
    if k > n {
        return Err(WorkflowError::KOutOfRange { k, n });
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| workers[i].clone()).collect());
        // rightmost index that can still advance
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(out)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Consensus {
    Agreed(AnswerCategory),
    /// No unique modal answer; goes to the expert.
    Unresolved,
}

/// Unique modal non-DontKnow answer, or `Unresolved` on ties.
pub fn consensus(answers: &[AnswerCategory]) -> Result<Consensus, WorkflowError> {
    let mut counts: BTreeMap<CategoryKey, (usize, &AnswerCategory)> = BTreeMap::new();
    for a in answers {
        if let Some(key) = a.key() {
            counts.entry(key).or_insert((0, a)).0 += 1;
        }
    }
    let best = counts
        .values()
        .map(|(c, _)| *c)
        .max()
        .ok_or(WorkflowError::AllDontKnow)?;
    let mut winners = counts.values().filter(|(c, _)| *c == best);
    let first = winners.next().expect("max exists");
    if winners.next().is_some() {
        return Ok(Consensus::Unresolved);
    }
    Ok(Consensus::Agreed(first.1.clone()))
}

pub(crate) fn check_threshold(threshold: f64) -> Result<(), WorkflowError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(WorkflowError::InvalidThreshold(threshold))
    }
}
