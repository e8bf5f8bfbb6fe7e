use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{mark, PlatformError, SessionRecord};
use crate::agreement::Alpha;
use crate::campaign::{aggregate_task, task_records, CampaignConfig, CampaignError, Microtask, Response, TaskAggregate, WorkerSession};
use crate::ids::{EntryId, WorkerId};
use crate::lexicon::Lexicon;
use crate::workflow::{
    apply_expert_decisions, export_expert_sheet, parse_expert_sheet, ClassificationOutcome, CrowdFilter,
    DataValidation, EntryRef, ExpertSheet, FinalOutcome, FinalRecord, RowKind, SheetItem, Step, TaskRun,
    ValidationOutcome, WorkerStatus, WorkflowError,
};

/// One execution of a task by a set of participants. Participants who
/// answered the task in an earlier round are not asked again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub run_id: String,
    pub participants: Vec<WorkerId>,
    pub awaiting: Vec<WorkerId>,
    pub sessions: BTreeMap<WorkerId, String>,
    pub closed: bool,
    pub run: Option<TaskRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    Filter(CrowdFilter),
    Validation(DataValidation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum TaskPhase {
    Collecting,
    Running {
        procedure: Procedure,
    },
    Qualified {
        outcome: ClassificationOutcome,
    },
    AwaitingExpert {
        outcome: ValidationOutcome,
        sheet: ExpertSheet,
    },
    Resolved {
        outcome: ValidationOutcome,
        records: Vec<FinalRecord>,
        alpha: Option<Alpha>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task: Microtask,
    pub rounds: Vec<Round>,
    pub responses: Vec<Response>,
    pub aggregate: Option<TaskAggregate>,
    pub phase: TaskPhase,
}

#[derive(Debug, Default)]
pub(crate) struct Effects {
    pub statuses: Vec<(WorkerId, WorkerStatus)>,
}

fn finished(s: &WorkerSession) -> bool {
    s.is_complete() || s.withdrawn || s.consent == Some(false)
}

fn build_run(
    task: &Microtask,
    responses: &[Response],
    participants: &[WorkerId],
    run_id: &str,
    config: &CampaignConfig,
) -> Result<TaskRun, CampaignError> {
    let mut t = task.clone();
    t.group = participants.to_vec();
    let mine: Vec<Response> = responses.iter().filter(|r| participants.contains(&r.worker)).cloned().collect();
    match aggregate_task(&t, &mine, config, run_id) {
        Ok(a) => Ok(TaskRun {
            participants: participants.to_vec(),
            ..a.run
        }),
        Err(CampaignError::NoSurvivingResponses(_)) => Ok(TaskRun {
            run_id: run_id.to_string(),
            participants: participants.to_vec(),
            responses: Vec::new(),
        }),
        Err(e) => Err(e),
    }
}

impl TaskState {
    pub fn new(task: Microtask) -> Self {
        Self {
            task,
            rounds: Vec::new(),
            responses: Vec::new(),
            aggregate: None,
            phase: TaskPhase::Collecting,
        }
    }

    pub(crate) fn assign(&mut self, group: &[WorkerId]) -> Result<(), PlatformError> {
        if !matches!(self.phase, TaskPhase::Collecting) || self.rounds.iter().any(|r| !r.sessions.is_empty()) {
            return Err(PlatformError::Conflict(format!("task {} already started", self.task.task_id)));
        }
        let distinct: BTreeSet<_> = group.iter().collect();
        if group.is_empty() || distinct.len() != group.len() {
            return Err(PlatformError::Invalid("group must be non-empty and distinct".into()));
        }
        self.task.group = group.to_vec();
        self.rounds = vec![Round {
            run_id: format!("{}-r0", self.task.task_id),
            participants: group.to_vec(),
            awaiting: group.to_vec(),
            sessions: BTreeMap::new(),
            closed: false,
            run: None,
        }];
        Ok(())
    }

    pub fn accepted_run(&self) -> Option<&TaskRun> {
        let id = match &self.phase {
            TaskPhase::AwaitingExpert { outcome, .. } | TaskPhase::Resolved { outcome, .. } => {
                outcome.accepted_run.as_ref()?
            }
            _ => return None,
        };
        self.rounds.iter().filter_map(|r| r.run.as_ref()).find(|r| &r.run_id == id)
    }

    fn push_round(&mut self, participants: Vec<WorkerId>) {
        let seen: BTreeSet<&WorkerId> = self.rounds.iter().flat_map(|r| r.sessions.keys()).collect();
        let awaiting = participants.iter().filter(|w| !seen.contains(w)).cloned().collect();
        let round = Round {
            run_id: format!("{}-r{}", self.task.task_id, self.rounds.len()),
            participants,
            awaiting,
            sessions: BTreeMap::new(),
            closed: false,
            run: None,
        };
        self.rounds.push(round);
    }

    pub(crate) fn start(
        &mut self,
        config: &CampaignConfig,
        lexicon: &Lexicon,
        reserve: Option<&[WorkerId]>,
        expert: &WorkerId,
    ) -> Result<Effects, PlatformError> {
        if !matches!(self.phase, TaskPhase::Collecting) {
            return Err(PlatformError::Conflict(format!("task {} is past collection", self.task.task_id)));
        }
        let Some(first) = self.rounds.first() else {
            return Err(PlatformError::Conflict(format!("task {} has no assigned group", self.task.task_id)));
        };
        if !first.closed {
            return Err(PlatformError::Conflict(format!("task {} is still collecting", self.task.task_id)));
        }
        let aggregate = aggregate_task(&self.task, &self.responses, config, &first.run_id)?;
        let mut effects = Effects::default();
        match reserve {
            Some(reserve) => {
                let run = aggregate.run.clone();
                let (v, step) = DataValidation::start(
                    run.participants.clone(),
                    reserve.to_vec(),
                    expert,
                    config.alpha_threshold,
                    run.clone(),
                )?;
                self.rounds[0].run = Some(run);
                self.phase = TaskPhase::Running {
                    procedure: Procedure::Validation(v),
                };
                self.aggregate = Some(aggregate);
                self.advance_validation(step, config, lexicon, &mut effects)?;
            }
            None => {
                let (mut f, _) = CrowdFilter::start(self.task.group.clone(), expert.clone(), config.alpha_threshold)?;
                let run = TaskRun {
                    participants: self.task.group.clone(),
                    ..aggregate.run.clone()
                };
                let step = f.submit(run.clone())?;
                self.rounds[0].run = Some(run);
                self.phase = TaskPhase::Running {
                    procedure: Procedure::Filter(f),
                };
                self.aggregate = Some(aggregate);
                self.advance_filter(step, &mut effects);
            }
        }
        Ok(effects)
    }

    /// Closes finished rounds and feeds their runs to the running procedure
    /// until a round needs fresh answers or the procedure is done.
    pub(crate) fn settle(
        &mut self,
        config: &CampaignConfig,
        sessions: &BTreeMap<String, SessionRecord>,
        lexicon: &Lexicon,
    ) -> Result<Effects, PlatformError> {
        let mut effects = Effects::default();
        loop {
            let Some(round) = self.rounds.last_mut() else {
                return Ok(effects);
            };
            if !round.closed {
                let done = round.awaiting.iter().all(|w| {
                    round
                        .sessions
                        .get(w)
                        .and_then(|s| sessions.get(s))
                        .is_some_and(|r| finished(&r.session))
                });
                if !done {
                    return Ok(effects);
                }
                round.closed = true;
            }
            if round.run.is_some() {
                return Ok(effects);
            }
            if !matches!(self.phase, TaskPhase::Running { .. }) {
                return Ok(effects);
            }
            let run = build_run(&self.task, &self.responses, &round.participants, &round.run_id, config)?;
            round.run = Some(run.clone());
            let TaskPhase::Running { procedure } = &mut self.phase else {
                unreachable!()
            };
            match procedure {
                Procedure::Filter(f) => {
                    let step = f.submit(run)?;
                    self.advance_filter(step, &mut effects);
                }
                Procedure::Validation(v) => {
                    let step = v.submit(run)?;
                    self.advance_validation(step, config, lexicon, &mut effects)?;
                }
            }
        }
    }

    fn advance_filter(&mut self, step: Step<ClassificationOutcome>, effects: &mut Effects) {
        match step {
            Step::Run(p) => self.push_round(p),
            Step::Done(outcome) => {
                mark(&mut effects.statuses, outcome.low_quality.iter().cloned(), WorkerStatus::LowQuality);
                self.phase = TaskPhase::Qualified { outcome };
            }
        }
    }

    fn advance_validation(
        &mut self,
        step: Step<ValidationOutcome>,
        config: &CampaignConfig,
        lexicon: &Lexicon,
        effects: &mut Effects,
    ) -> Result<(), PlatformError> {
        let outcome = match step {
            Step::Run(p) => {
                self.push_round(p);
                return Ok(());
            }
            Step::Done(o) => o,
        };
        let low = outcome.classification.low_quality.iter().cloned();
        if outcome.accepted_run.is_some() {
            mark(&mut effects.statuses, low, WorkerStatus::Replaced);
        } else {
            mark(&mut effects.statuses, low, WorkerStatus::LowQuality);
            mark(
                &mut effects.statuses,
                outcome.reserve_low_quality.iter().cloned(),
                WorkerStatus::LowQuality,
            );
        }
        let accepted = outcome
            .accepted_run
            .as_ref()
            .and_then(|id| self.rounds.iter().filter_map(|r| r.run.as_ref()).find(|r| &r.run_id == id))
            .cloned();
        if outcome.expert_queue.is_empty() {
            let records = task_records(&self.task, accepted.as_ref(), &[], &[])?;
            let alpha = report_alpha(&outcome);
            self.phase = TaskPhase::Resolved {
                outcome,
                records,
                alpha,
            };
            return Ok(());
        }
        let items: BTreeMap<EntryId, SheetItem> = self
            .task
            .source_items()
            .filter_map(|id| lexicon.entry(id))
            .map(|e| {
                (
                    e.id.clone(),
                    SheetItem {
                        item: e.id.clone(),
                        lemma: e.word.clone(),
                        gloss: e.gloss.clone(),
                    },
                )
            })
            .collect();
        let by_item = accepted.map(|r| r.by_item()).unwrap_or_default();
        let sheet = export_expert_sheet(&outcome.expert_queue, &by_item, &items, config.sanity_rate, config.sheet_seed)?;
        self.phase = TaskPhase::AwaitingExpert { outcome, sheet };
        Ok(())
    }

    pub(crate) fn resolve_with_sheet(
        &mut self,
        csv: &str,
        config: &CampaignConfig,
        lexicon: &Lexicon,
    ) -> Result<(), PlatformError> {
        let TaskPhase::AwaitingExpert { outcome, .. } = &self.phase else {
            return Err(PlatformError::Conflict(format!(
                "task {} is not awaiting an expert",
                self.task.task_id
            )));
        };
        let outcome = outcome.clone();
        let sources: Vec<_> = self.task.source_items().filter_map(|id| lexicon.entry(id)).collect();
        let resolve = |lemma: &str, gloss: &str| -> Option<EntryId> {
            sources
                .iter()
                .find(|e| e.word.trim() == lemma && e.gloss.trim() == gloss)
                .or_else(|| sources.iter().find(|e| e.word.trim() == lemma))
                .map(|e| e.id.clone())
        };
        let rows = parse_expert_sheet(csv, &resolve)?;
        let queued: BTreeSet<&EntryId> = outcome.expert_queue.iter().map(|q| &q.item).collect();
        if let Some((i, row)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.row_kind != RowKind::Sanity && !queued.contains(&r.item))
        {
            return Err(WorkflowError::MalformedSheet {
                line: i + 2,
                reason: format!("{} is not queued for review", row.item),
            }
            .into());
        }
        let expert_records = apply_expert_decisions(&rows)?;
        for r in &expert_records {
            if let FinalOutcome::Equivalent { targets } = &r.outcome {
                for t in targets {
                    if let EntryRef::Existing { id } = t {
                        let ok = lexicon.entry(id).is_some_and(|e| e.language == config.target_language);
                        if !ok {
                            return Err(PlatformError::Invalid(format!("{id} is not a target-language entry")));
                        }
                    }
                }
            }
        }
        let records = {
            let accepted = self.accepted_run();
            task_records(&self.task, accepted, &outcome.expert_queue, &expert_records)?
        };
        let alpha = report_alpha(&outcome);
        self.phase = TaskPhase::Resolved {
            outcome,
            records,
            alpha,
        };
        Ok(())
    }
}

fn report_alpha(outcome: &ValidationOutcome) -> Option<Alpha> {
    outcome
        .classification
        .passing_alpha
        .or_else(|| outcome.history.first().and_then(|r| r.alpha))
}
