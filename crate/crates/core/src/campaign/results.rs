use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{acq_gate, timing_filter, AcqVerdict, CampaignConfig, CampaignError, Microtask, Response};
use crate::agreement::Alpha;
use crate::ids::{EntryId, WorkerId};
use crate::lexicon::LexicalEntry;
use crate::text::normalize_lemma;
use crate::workflow::{
    consensus, Consensus, EntryRef, FinalOutcome, FinalRecord, QueuedItem, RecordProvenance, RunResponse, TaskRun,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Every response of the worker is dropped.
    AcqFailed,
    AcqsUnanswered,
    TimingOutlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub worker: WorkerId,
    /// `None` when the whole task is excluded for the worker.
    pub item: Option<EntryId>,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAggregate {
    pub task_id: String,
    /// Surviving non-ACQ responses.
    pub run: TaskRun,
    pub acq: Vec<AcqVerdict>,
    pub exclusions: Vec<Exclusion>,
    /// `None` when fewer than two annotators survive or nothing is pairable.
    pub alpha: Option<Alpha>,
}

/// Applies the ACQ gate and timing filter and builds the task run that
/// validation starts from. ACQ items never enter the run.
pub fn aggregate_task(
    task: &Microtask,
    responses: &[Response],
    config: &CampaignConfig,
    run_id: &str,
) -> Result<TaskAggregate, CampaignError> {
    let mut by_worker: BTreeMap<&WorkerId, BTreeMap<&EntryId, &Response>> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.task == task.task_id) {
        by_worker.entry(&r.worker).or_default().insert(&r.item, r);
    }
    let mut workers: Vec<&WorkerId> = task.group.iter().filter(|w| by_worker.contains_key(w)).collect();
    for w in by_worker.keys() {
        if !workers.contains(w) {
            workers.push(w);
        }
    }

    let mut acq = Vec::new();
    let mut exclusions = Vec::new();
    let mut participants = Vec::new();
    let mut surviving = Vec::new();
    for worker in workers {
        let mine: Vec<Response> = task
            .items
            .iter()
            .filter_map(|i| by_worker[worker].get(i).map(|r| (*r).clone()))
            .collect();
        match acq_gate(task, worker, &mine, config.acq_pass_rate) {
            Ok(v) if v.passed => acq.push(v),
            Ok(v) => {
                acq.push(v);
                exclusions.push(Exclusion {
                    worker: worker.clone(),
                    item: None,
                    reason: ExclusionReason::AcqFailed,
                });
                continue;
            }
            Err(CampaignError::AcqsUnanswered { .. }) => {
                exclusions.push(Exclusion {
                    worker: worker.clone(),
                    item: None,
                    reason: ExclusionReason::AcqsUnanswered,
                });
                continue;
            }
            Err(e) => return Err(e),
        }
        let questions: Vec<Response> = mine.into_iter().filter(|r| !task.is_acq(&r.item)).collect();
        let timing = timing_filter(&questions, config.outlier_low_ratio, config.outlier_high_ratio);
        for r in &timing.excluded {
            exclusions.push(Exclusion {
                worker: worker.clone(),
                item: Some(r.item.clone()),
                reason: ExclusionReason::TimingOutlier,
            });
        }
        if !timing.retained.is_empty() {
            participants.push(worker.clone());
        }
        surviving.extend(timing.retained);
    }
    if surviving.is_empty() {
        return Err(CampaignError::NoSurvivingResponses(task.task_id.clone()));
    }

    // presentation order, then worker order
    let position: BTreeMap<&EntryId, usize> = task.items.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let worker_pos: BTreeMap<&WorkerId, usize> = participants.iter().enumerate().map(|(i, w)| (w, i)).collect();
    surviving.sort_by_key(|r| (position[&r.item], worker_pos[&r.worker]));
    let run = TaskRun {
        run_id: run_id.to_string(),
        participants: participants.clone(),
        responses: surviving
            .into_iter()
            .map(|r| RunResponse {
                item: r.item,
                worker: r.worker,
                answer: r.answer,
                duration_seconds: r.duration_seconds,
            })
            .collect(),
    };
    let alpha = run.alpha().ok();
    Ok(TaskAggregate {
        task_id: task.task_id.clone(),
        run,
        acq,
        exclusions,
        alpha,
    })
}

/// Final records for a task: consensus for items accepted without review,
/// expert records for the rest, in presentation order.
pub fn task_records(
    task: &Microtask,
    accepted: Option<&TaskRun>,
    queue: &[QueuedItem],
    expert: &[FinalRecord],
) -> Result<Vec<FinalRecord>, CampaignError> {
    let queued: BTreeSet<&EntryId> = queue.iter().map(|q| &q.item).collect();
    let from_expert: BTreeMap<&EntryId, &FinalRecord> = expert.iter().map(|r| (&r.item, r)).collect();
    let accepted_items: BTreeMap<EntryId, Vec<_>> = accepted
        .map(|run| run.by_item().into_iter().collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for item in task.source_items() {
        if queued.contains(item) {
            let record = from_expert.get(item).ok_or_else(|| CampaignError::UnresolvedItem(item.clone()))?;
            out.push((*record).clone());
            continue;
        }
        let Some(responses) = accepted_items.get(item) else {
            continue;
        };
        let answers: Vec<_> = responses.iter().map(|(_, a)| a.clone()).collect();
        let outcome = match consensus(&answers)? {
            Consensus::Agreed(a) => FinalOutcome::from_answer(&a),
            Consensus::Unresolved => None,
        }
        .ok_or_else(|| CampaignError::UnresolvedItem(item.clone()))?;
        out.push(FinalRecord {
            item: item.clone(),
            outcome,
            provenance: RecordProvenance::Crowd,
        });
    }
    Ok(out)
}

/// Target entries left for the reverse direction: confirmed equivalents and
/// entries sharing a normalized lemma with them are removed.
pub fn derive_reverse_dataset(records: &[FinalRecord], target: &[LexicalEntry]) -> Vec<LexicalEntry> {
    let removed: BTreeSet<&EntryId> = records
        .iter()
        .filter_map(|r| match &r.outcome {
            FinalOutcome::Equivalent { targets } => Some(targets),
            FinalOutcome::Gap => None,
        })
        .flatten()
        .filter_map(|t| match t {
            EntryRef::Existing { id } => Some(id),
            EntryRef::New { .. } => None,
        })
        .collect();
    let lemmas: BTreeSet<String> = target
        .iter()
        .filter(|e| removed.contains(&e.id))
        .map(|e| normalize_lemma(&e.word))
        .collect();
    target
        .iter()
        .filter(|e| !removed.contains(&e.id) && !lemmas.contains(&normalize_lemma(&e.word)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReportRow {
    pub task: String,
    pub gaps: usize,
    pub words: usize,
    pub new_concepts: usize,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub rows: Vec<TaskReportRow>,
    pub total_gaps: usize,
    pub total_words: usize,
    pub total_new_concepts: usize,
    pub average_alpha: Option<f64>,
}

/// Per-task counts. An item whose outcome names a new word counts as a new
/// concept; other equivalences count as words.
pub fn campaign_report(tasks: &[(String, Vec<FinalRecord>, Option<Alpha>)]) -> CampaignReport {
    let mut rows = Vec::new();
    for (task, records, alpha) in tasks {
        let mut row = TaskReportRow {
            task: task.clone(),
            gaps: 0,
            words: 0,
            new_concepts: 0,
            alpha: alpha.and_then(Alpha::value),
        };
        for r in records {
            match &r.outcome {
                FinalOutcome::Gap => row.gaps += 1,
                FinalOutcome::Equivalent { targets } => {
                    if targets.iter().any(|t| matches!(t, EntryRef::New { .. })) {
                        row.new_concepts += 1;
                    } else {
                        row.words += 1;
                    }
                }
            }
        }
        rows.push(row);
    }
    let alphas: Vec<f64> = rows.iter().filter_map(|r| r.alpha).collect();
    CampaignReport {
        total_gaps: rows.iter().map(|r| r.gaps).sum(),
        total_words: rows.iter().map(|r| r.words).sum(),
        total_new_concepts: rows.iter().map(|r| r.new_concepts).sum(),
        average_alpha: (!alphas.is_empty()).then(|| alphas.iter().sum::<f64>() / alphas.len() as f64),
        rows,
    }
}

fn fmt_alpha(a: Option<f64>) -> String {
    a.map(|v| format!("{v:.4}")).unwrap_or_default()
}

impl CampaignReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,gaps,words,new_concepts,alpha\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.task,
                r.gaps,
                r.words,
                r.new_concepts,
                fmt_alpha(r.alpha)
            ));
        }
        out.push_str(&format!(
            "total,{},{},{},{}\n",
            self.total_gaps,
            self.total_words,
            self.total_new_concepts,
            fmt_alpha(self.average_alpha)
        ));
        out
    }

    /// Sums two directions' reports.
    pub fn combined(&self, other: &CampaignReport) -> (usize, usize, usize) {
        (
            self.total_gaps + other.total_gaps,
            self.total_words + other.total_words,
            self.total_new_concepts + other.total_new_concepts,
        )
    }
}
