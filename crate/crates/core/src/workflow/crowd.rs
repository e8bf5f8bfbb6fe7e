use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{check_threshold, combinations, ClassificationOutcome, TaskRun, TaskRunner, WorkflowError};
use crate::agreement::{item_iaa_answers, Alpha, AnswerCategory};
use crate::ids::{EntryId, WorkerId};

/// What a procedure needs next.
#[derive(Debug, Clone, PartialEq)]
pub enum Step<T> {
    Run(Vec<WorkerId>),
    Done(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub participants: Vec<WorkerId>,
    /// `None` when alpha could not be computed (e.g. no pairable items).
    pub alpha: Option<Alpha>,
    pub passed: bool,
}

fn evaluate(run: &TaskRun, threshold: f64) -> RunRecord {
    let alpha = run.alpha().ok();
    RunRecord {
        run_id: run.run_id.clone(),
        participants: run.participants.clone(),
        alpha,
        passed: alpha.is_some_and(|a| a.meets(threshold)),
    }
}

fn same_members(a: &[WorkerId], b: &[WorkerId]) -> bool {
    let a: BTreeSet<&WorkerId> = a.iter().collect();
    let b: BTreeSet<&WorkerId> = b.iter().collect();
    a == b
}

fn check_distinct(groups: &[&[WorkerId]]) -> Result<(), WorkflowError> {
    let mut seen = BTreeSet::new();
    for w in groups.iter().flat_map(|g| g.iter()) {
        if !seen.insert(w) {
            return Err(WorkflowError::InvalidGroup(format!("worker {w} listed twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlannedRun {
    participants: Vec<WorkerId>,
    /// Group members whose quality this run tests.
    subset: Vec<WorkerId>,
}

/// Crowd filtering: the full group runs first; on failure the expert runs
/// with every subset of size n-1 down to 1 until one reaches the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdFilter {
    group: Vec<WorkerId>,
    expert: WorkerId,
    threshold: f64,
    plan: Vec<PlannedRun>,
    cursor: usize,
    history: Vec<RunRecord>,
    outcome: Option<ClassificationOutcome>,
}

impl CrowdFilter {
    pub fn start(
        group: Vec<WorkerId>,
        expert: WorkerId,
        threshold: f64,
    ) -> Result<(Self, Step<ClassificationOutcome>), WorkflowError> {
        check_threshold(threshold)?;
        if group.len() < 2 {
            return Err(WorkflowError::InvalidGroup("crowd filtering needs at least 2 workers".into()));
        }
        check_distinct(&[&group, std::slice::from_ref(&expert)])?;
        let mut plan = vec![PlannedRun {
            participants: group.clone(),
            subset: group.clone(),
        }];
        for size in (1..group.len()).rev() {
            for subset in combinations(&group, size)? {
                let mut participants = vec![expert.clone()];
                participants.extend(subset.iter().cloned());
                plan.push(PlannedRun { participants, subset });
            }
        }
        let first = plan[0].participants.clone();
        let filter = Self {
            group,
            expert,
            threshold,
            plan,
            cursor: 0,
            history: Vec::new(),
            outcome: None,
        };
        Ok((filter, Step::Run(first)))
    }

    pub fn pending(&self) -> Option<&[WorkerId]> {
        if self.outcome.is_some() {
            return None;
        }
        self.plan.get(self.cursor).map(|p| p.participants.as_slice())
    }

    pub fn history(&self) -> &[RunRecord] {
        &self.history
    }

    pub fn outcome(&self) -> Option<&ClassificationOutcome> {
        self.outcome.as_ref()
    }

    /// Greatest number of runs this procedure can request.
    pub fn max_runs(&self) -> usize {
        self.plan.len()
    }

    pub fn submit(&mut self, run: TaskRun) -> Result<Step<ClassificationOutcome>, WorkflowError> {
        let planned = self.plan.get(self.cursor).ok_or(WorkflowError::AlreadyFinished)?.clone();
        if self.outcome.is_some() {
            return Err(WorkflowError::AlreadyFinished);
        }
        if !same_members(&planned.participants, &run.participants) {
            return Err(WorkflowError::ParticipantMismatch {
                run_id: run.run_id.clone(),
                expected: planned.participants,
                got: run.participants.clone(),
            });
        }
        run.check()?;
        let record = evaluate(&run, self.threshold);
        let passed = record.passed;
        let alpha = record.alpha;
        self.history.push(record);
        self.cursor += 1;

        if passed || self.cursor == self.plan.len() {
            let high: BTreeSet<WorkerId> = if passed {
                planned.subset.iter().cloned().collect()
            } else {
                BTreeSet::new()
            };
            let low = self.group.iter().filter(|w| !high.contains(*w)).cloned().collect();
            let outcome = ClassificationOutcome {
                high_quality: high,
                low_quality: low,
                runs_executed: self.history.iter().map(|r| r.run_id.clone()).collect(),
                passing_alpha: if passed { alpha } else { None },
            };
            self.outcome = Some(outcome.clone());
            return Ok(Step::Done(outcome));
        }
        Ok(Step::Run(self.plan[self.cursor].participants.clone()))
    }
}

/// Runs crowd filtering to completion. The expert annotates in every re-run.
pub fn filter_crowd(
    group: &[WorkerId],
    expert: &WorkerId,
    threshold: f64,
    runner: &mut dyn TaskRunner,
) -> Result<ClassificationOutcome, WorkflowError> {
    let (mut filter, mut step) = CrowdFilter::start(group.to_vec(), expert.clone(), threshold)?;
    loop {
        match step {
            Step::Done(outcome) => return Ok(outcome),
            Step::Run(participants) => {
                let run = runner.run(&participants)?;
                step = filter.submit(run)?;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueReason {
    /// Below 100% agreement.
    Disagreement,
    /// At least one DontKnow.
    DontKnow,
    /// No run passed: the original answers go to the expert in full.
    Unvalidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedItem {
    pub item: EntryId,
    pub reason: QueueReason,
    pub responses: Vec<(WorkerId, AnswerCategory)>,
}

/// Items needing expert attention in an accepted run.
pub fn disputed_items(run: &TaskRun) -> Vec<QueuedItem> {
    run.by_item()
        .into_iter()
        .filter_map(|(item, responses)| {
            let answers: Vec<AnswerCategory> = responses.iter().map(|(_, a)| a.clone()).collect();
            let reason = if answers.contains(&AnswerCategory::DontKnow) {
                Some(QueueReason::DontKnow)
            } else {
                match item_iaa_answers(&answers) {
                    Ok((iaa, _)) if iaa >= 100.0 => None,
                    _ => Some(QueueReason::Disagreement),
                }
            };
            reason.map(|reason| QueuedItem {
                item,
                reason,
                responses,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    /// Classification of the validated group.
    pub classification: ClassificationOutcome,
    /// Reserve-group members found low-quality (terminal branch only).
    pub reserve_low_quality: BTreeSet<WorkerId>,
    /// Run whose answers are accepted; `None` when nothing passed.
    pub accepted_run: Option<String>,
    pub expert_queue: Vec<QueuedItem>,
    pub history: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MixedRun {
    kept: Vec<WorkerId>,
    reserve: Vec<WorkerId>,
}

impl MixedRun {
    fn participants(&self) -> Vec<WorkerId> {
        self.kept.iter().chain(&self.reserve).cloned().collect()
    }
}

/// Validation of a completed task: if the original group's alpha fails, k
/// of its workers are replaced by k reserve workers (k = 1..n, keeping the
/// total at n) until a run reaches the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataValidation {
    g1: Vec<WorkerId>,
    g2: Vec<WorkerId>,
    threshold: f64,
    original: TaskRun,
    plan: Vec<MixedRun>,
    cursor: usize,
    history: Vec<RunRecord>,
    outcome: Option<ValidationOutcome>,
}

impl DataValidation {
    pub fn start(
        g1: Vec<WorkerId>,
        g2: Vec<WorkerId>,
        expert: &WorkerId,
        threshold: f64,
        original: TaskRun,
    ) -> Result<(Self, Step<ValidationOutcome>), WorkflowError> {
        check_threshold(threshold)?;
        if g1.len() < 2 {
            return Err(WorkflowError::InvalidGroup("validated group needs at least 2 workers".into()));
        }
        if g2.is_empty() {
            return Err(WorkflowError::InvalidGroup("reserve group is empty".into()));
        }
        check_distinct(&[&g1, &g2, std::slice::from_ref(expert)])?;
        original.check()?;
        if let Some(r) = original.responses.iter().find(|r| !g1.contains(&r.worker)) {
            return Err(WorkflowError::ForeignResponse {
                run_id: original.run_id.clone(),
                worker: r.worker.clone(),
            });
        }

        let n = g1.len();
        let mut plan = Vec::new();
        for k in 1..=n {
            if k > g2.len() {
                break;
            }
            for reserve in combinations(&g2, k)? {
                for kept in combinations(&g1, n - k)? {
                    plan.push(MixedRun {
                        kept,
                        reserve: reserve.clone(),
                    });
                }
            }
        }

        let record = evaluate(&original, threshold);
        let mut validation = Self {
            g1,
            g2,
            threshold,
            original,
            plan,
            cursor: 0,
            history: vec![record.clone()],
            outcome: None,
        };
        if record.passed {
            let kept = validation.g1.clone();
            let run = validation.original.clone();
            validation.finish_passed(&kept, &run, record.alpha);
            let step = Step::Done(validation.outcome.clone().expect("just finished"));
            return Ok((validation, step));
        }
        let step = validation.next_step();
        Ok((validation, step))
    }

    fn finish_passed(&mut self, kept: &[WorkerId], run: &TaskRun, alpha: Option<Alpha>) {
        let high: BTreeSet<WorkerId> = kept.iter().cloned().collect();
        let low = self.g1.iter().filter(|w| !high.contains(*w)).cloned().collect();
        self.outcome = Some(ValidationOutcome {
            classification: ClassificationOutcome {
                high_quality: high,
                low_quality: low,
                runs_executed: self.run_ids(),
                passing_alpha: alpha,
            },
            reserve_low_quality: BTreeSet::new(),
            accepted_run: Some(run.run_id.clone()),
            expert_queue: disputed_items(run),
            history: self.history.clone(),
        });
    }

    fn finish_failed(&mut self) {
        let expert_queue = self
            .original
            .by_item()
            .into_iter()
            .map(|(item, responses)| QueuedItem {
                item,
                reason: QueueReason::Unvalidated,
                responses,
            })
            .collect();
        self.outcome = Some(ValidationOutcome {
            classification: ClassificationOutcome {
                high_quality: BTreeSet::new(),
                low_quality: self.g1.iter().cloned().collect(),
                runs_executed: self.run_ids(),
                passing_alpha: None,
            },
            reserve_low_quality: self.g2.iter().cloned().collect(),
            accepted_run: None,
            expert_queue,
            history: self.history.clone(),
        });
    }

    fn run_ids(&self) -> Vec<String> {
        self.history.iter().map(|r| r.run_id.clone()).collect()
    }

    fn next_step(&mut self) -> Step<ValidationOutcome> {
        match self.plan.get(self.cursor) {
            Some(mixed) => Step::Run(mixed.participants()),
            None => {
                self.finish_failed();
                Step::Done(self.outcome.clone().unwrap())
            }
        }
    }

    pub fn pending(&self) -> Option<Vec<WorkerId>> {
        if self.outcome.is_some() {
            return None;
        }
        self.plan.get(self.cursor).map(MixedRun::participants)
    }

    pub fn outcome(&self) -> Option<&ValidationOutcome> {
        self.outcome.as_ref()
    }

    pub fn history(&self) -> &[RunRecord] {
        &self.history
    }

    /// Re-runs this procedure can request at most (excluding the original).
    pub fn max_reruns(&self) -> usize {
        self.plan.len()
    }

    pub fn submit(&mut self, run: TaskRun) -> Result<Step<ValidationOutcome>, WorkflowError> {
        if self.outcome.is_some() {
            return Err(WorkflowError::AlreadyFinished);
        }
        let planned = self.plan.get(self.cursor).ok_or(WorkflowError::AlreadyFinished)?.clone();
        let expected = planned.participants();
        if !same_members(&expected, &run.participants) {
            return Err(WorkflowError::ParticipantMismatch {
                run_id: run.run_id.clone(),
                expected,
                got: run.participants.clone(),
            });
        }
        run.check()?;
        let record = evaluate(&run, self.threshold);
        self.history.push(record.clone());
        self.cursor += 1;
        if record.passed {
            self.finish_passed(&planned.kept, &run, record.alpha);
            return Ok(Step::Done(self.outcome.clone().unwrap()));
        }
        Ok(self.next_step())
    }
}

/// Runs data validation to completion. `g1_run` holds the group's original answers.
pub fn validate_responses(
    g1: &[WorkerId],
    g1_run: TaskRun,
    g2: &[WorkerId],
    expert: &WorkerId,
    threshold: f64,
    runner: &mut dyn TaskRunner,
) -> Result<ValidationOutcome, WorkflowError> {
    let (mut validation, mut step) =
        DataValidation::start(g1.to_vec(), g2.to_vec(), expert, threshold, g1_run)?;
    loop {
        match step {
            Step::Done(outcome) => return Ok(outcome),
            Step::Run(participants) => {
                let run = runner.run(&participants)?;
                step = validation.submit(run)?;
            }
        }
    }
}
