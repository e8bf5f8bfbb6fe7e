//! Deterministic campaign platform driven by serializable commands.
//!
//! All state changes go through [`Platform::apply`]. A command either
//! succeeds and changes state, or fails and leaves state untouched, so a
//! log of successful commands replays to an identical platform.

mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agreement::Alpha;
use crate::campaign::{
    self, campaign_report, derive_reverse_dataset, generate_tasks, parse_acq_bank, parse_guidelines, AcqItem,
    CampaignConfig, CampaignError, CampaignReport, Candidate, Guideline, Microtask, Prompt, SessionInput,
    SessionStep, Submission, TaskCatalog, WorkerSession,
};
use crate::ids::{CampaignId, EntryId, LanguageCode, WorkerId};
use crate::ingestion::parse_dataset;
use crate::lexicon::{EntryProvenance, GapProvenance, Lexicon, LexiconDocument, LexiconError};
use crate::workflow::{
    sheet_to_csv, EntryRef, FinalOutcome, FinalRecord, RecordProvenance, Worker, WorkerRole, WorkerStatus,
    WorkflowError,
};

pub use task::{Procedure, Round, TaskPhase, TaskState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Draft,
    Active,
    Closed,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    BadRequest,
    NotFound,
    Conflict,
    Gone,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlatformError {
    #[error("unknown campaign {0}")]
    UnknownCampaign(CampaignId),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown worker {0}")]
    UnknownWorker(WorkerId),
    #[error("cannot {action} campaign in state {state:?}")]
    Lifecycle { state: Lifecycle, action: &'static str },
    #[error("task is closed")]
    TaskClosed,
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

impl PlatformError {
    pub fn class(&self) -> ErrorClass {
        use CampaignError as C;
        match self {
            PlatformError::UnknownCampaign(_)
            | PlatformError::UnknownTask(_)
            | PlatformError::UnknownSession(_)
            | PlatformError::UnknownWorker(_) => ErrorClass::NotFound,
            PlatformError::Lifecycle { .. } | PlatformError::Conflict(_) => ErrorClass::Conflict,
            PlatformError::TaskClosed => ErrorClass::Gone,
            PlatformError::Invalid(_) => ErrorClass::BadRequest,
            PlatformError::Campaign(e) => match e {
                C::NotConsented
                | C::SessionDone
                | C::InvalidTransition { .. }
                | C::NotFinal
                | C::Direction1NotFinal
                | C::UnresolvedItem(_)
                | C::NoSurvivingResponses(_)
                | C::AcqsUnanswered { .. } => ErrorClass::Conflict,
                C::Workflow(w) => workflow_class(w),
                _ => ErrorClass::BadRequest,
            },
            PlatformError::Workflow(w) => workflow_class(w),
            PlatformError::Lexicon(e) => match e {
                LexiconError::ConflictingLexicalization { .. } | LexiconError::ImportConflict(_) => {
                    ErrorClass::Conflict
                }
                LexiconError::UnknownEntry(_) | LexiconError::UnknownConcept(_) | LexiconError::UnknownLanguage(_) => {
                    ErrorClass::NotFound
                }
                _ => ErrorClass::BadRequest,
            },
        }
    }
}

fn workflow_class(e: &WorkflowError) -> ErrorClass {
    match e {
        WorkflowError::MissingDecision { .. }
        | WorkflowError::InvalidDecision { .. }
        | WorkflowError::ConflictingDecisions(_)
        | WorkflowError::MalformedSheet { .. }
        | WorkflowError::InvalidGroup(_)
        | WorkflowError::InvalidThreshold(_)
        | WorkflowError::InvalidSanityRate(_)
        | WorkflowError::KOutOfRange { .. } => ErrorClass::BadRequest,
        _ => ErrorClass::Conflict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    CreateCampaign {
        description: String,
        date: String,
        config: CampaignConfig,
    },
    UploadSource { campaign: CampaignId, csv: String },
    UploadTarget { campaign: CampaignId, csv: String },
    UploadGuidelines { campaign: CampaignId, csv: String },
    UploadAcqBank { campaign: CampaignId, csv: String },
    RegisterWorker { worker: WorkerId, role: WorkerRole },
    GenerateTasks { campaign: CampaignId },
    AssignTask {
        campaign: CampaignId,
        task: String,
        group: Vec<WorkerId>,
    },
    StartSession {
        campaign: CampaignId,
        task: String,
        worker: WorkerId,
        at_ms: u64,
    },
    Consent { session: String, accept: bool, at_ms: u64 },
    Withdraw { session: String, at_ms: u64 },
    SubmitAnswer {
        session: String,
        item: EntryId,
        step: SessionStep,
        input: SessionInput,
        at_ms: u64,
    },
    /// Ends the open round of a task; unfinished sessions are withdrawn.
    CloseTask { campaign: CampaignId, task: String },
    StartValidation {
        campaign: CampaignId,
        task: String,
        reserve: Vec<WorkerId>,
        expert: WorkerId,
    },
    StartCrowdFilter {
        campaign: CampaignId,
        task: String,
        expert: WorkerId,
    },
    UploadExpertSheet {
        campaign: CampaignId,
        task: String,
        csv: String,
    },
    CloseCampaign { campaign: CampaignId },
    FinalizeCampaign { campaign: CampaignId },
    CreateReverseCampaign {
        from: CampaignId,
        description: String,
        date: String,
        config: CampaignConfig,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CreateCampaign { .. } => "create_campaign",
            Command::UploadSource { .. } => "upload_source",
            Command::UploadTarget { .. } => "upload_target",
            Command::UploadGuidelines { .. } => "upload_guidelines",
            Command::UploadAcqBank { .. } => "upload_acq_bank",
            Command::RegisterWorker { .. } => "register_worker",
            Command::GenerateTasks { .. } => "generate_tasks",
            Command::AssignTask { .. } => "assign_task",
            Command::StartSession { .. } => "start_session",
            Command::Consent { .. } => "consent",
            Command::Withdraw { .. } => "withdraw",
            Command::SubmitAnswer { .. } => "submit_answer",
            Command::CloseTask { .. } => "close_task",
            Command::StartValidation { .. } => "start_validation",
            Command::StartCrowdFilter { .. } => "start_crowd_filter",
            Command::UploadExpertSheet { .. } => "upload_expert_sheet",
            Command::CloseCampaign { .. } => "close_campaign",
            Command::FinalizeCampaign { .. } => "finalize_campaign",
            Command::CreateReverseCampaign { .. } => "create_reverse_campaign",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CommandOutput {
    Done,
    CampaignCreated { campaign: CampaignId },
    Uploaded { rows: usize },
    TasksGenerated { tasks: Vec<String> },
    SessionStarted { session: String },
    Answer { submission: Submission },
    TaskPhase { phase: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub id: CampaignId,
    pub description: String,
    pub date: String,
    pub config: CampaignConfig,
    pub lifecycle: Lifecycle,
    pub source: Vec<EntryId>,
    pub target: Vec<EntryId>,
    pub guidelines: Vec<Guideline>,
    pub acq_bank: Vec<AcqItem>,
    pub tasks: Vec<TaskState>,
    pub reverse_of: Option<CampaignId>,
}

impl CampaignState {
    fn task_index(&self, task: &str) -> Result<usize, PlatformError> {
        self.tasks
            .iter()
            .position(|t| t.task.task_id == task)
            .ok_or_else(|| PlatformError::UnknownTask(task.to_string()))
    }

    fn require(&self, states: &[Lifecycle], action: &'static str) -> Result<(), PlatformError> {
        if states.contains(&self.lifecycle) {
            Ok(())
        } else {
            Err(PlatformError::Lifecycle {
                state: self.lifecycle,
                action,
            })
        }
    }

    /// Final records of every resolved task, in task order.
    pub fn records(&self) -> Vec<FinalRecord> {
        self.tasks
            .iter()
            .filter_map(|t| match &t.phase {
                TaskPhase::Resolved { records, .. } => Some(records.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub campaign: CampaignId,
    pub task: usize,
    pub round: usize,
    pub session: WorkerSession,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub lexicon: Lexicon,
    pub workers: BTreeMap<WorkerId, Worker>,
    pub campaigns: BTreeMap<CampaignId, CampaignState>,
    pub sessions: BTreeMap<String, SessionRecord>,
    next_campaign: u64,
    next_session: u64,
}

impl Platform {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn campaign(&self, id: &CampaignId) -> Result<&CampaignState, PlatformError> {
        self.campaigns
            .get(id)
            .ok_or_else(|| PlatformError::UnknownCampaign(id.clone()))
    }

    fn campaign_mut(&mut self, id: &CampaignId) -> Result<&mut CampaignState, PlatformError> {
        self.campaigns
            .get_mut(id)
            .ok_or_else(|| PlatformError::UnknownCampaign(id.clone()))
    }

    pub fn session(&self, id: &str) -> Result<&SessionRecord, PlatformError> {
        self.sessions
            .get(id)
            .ok_or_else(|| PlatformError::UnknownSession(id.to_string()))
    }

    pub fn apply(&mut self, command: &Command) -> Result<CommandOutput, PlatformError> {
        match command {
            Command::CreateCampaign {
                description,
                date,
                config,
            } => self.create_campaign(description, date, config, Vec::new(), Vec::new(), None),
            Command::UploadSource { campaign, csv } => self.upload_dataset(campaign, csv, true),
            Command::UploadTarget { campaign, csv } => self.upload_dataset(campaign, csv, false),
            Command::UploadGuidelines { campaign, csv } => {
                let rows = parse_guidelines(csv)?;
                let c = self.campaign_mut(campaign)?;
                c.require(&[Lifecycle::Draft, Lifecycle::Active], "edit guidelines of")?;
                let n = rows.len();
                c.guidelines = rows;
                Ok(CommandOutput::Uploaded { rows: n })
            }
            Command::UploadAcqBank { campaign, csv } => self.upload_acq_bank(campaign, csv),
            Command::RegisterWorker { worker, role } => {
                if worker.as_str().trim().is_empty() {
                    return Err(PlatformError::Invalid("worker id must not be empty".into()));
                }
                if let Some(existing) = self.workers.get(worker) {
                    if existing.role != *role {
                        return Err(PlatformError::Conflict(format!("worker {worker} already registered")));
                    }
                    return Ok(CommandOutput::Done);
                }
                self.workers.insert(worker.clone(), Worker::new(worker.clone(), *role));
                Ok(CommandOutput::Done)
            }
            Command::GenerateTasks { campaign } => self.generate(campaign),
            Command::AssignTask { campaign, task, group } => self.assign(campaign, task, group),
            Command::StartSession {
                campaign,
                task,
                worker,
                at_ms: _,
            } => self.start_session(campaign, task, worker),
            Command::Consent { session, accept, at_ms } => {
                self.with_session(session, |s, _| s.record_consent(*accept, *at_ms).map(|_| CommandOutput::Done))
            }
            Command::Withdraw { session, at_ms: _ } => self.with_session(session, |s, _| {
                s.withdraw();
                Ok(CommandOutput::Done)
            }),
            Command::SubmitAnswer {
                session,
                item,
                step,
                input,
                at_ms,
            } => self.with_session(session, |s, catalog| {
                let submission = s.submit(item, *step, input.clone(), catalog, *at_ms)?;
                Ok(CommandOutput::Answer { submission })
            }),
            Command::CloseTask { campaign, task } => self.close_task(campaign, task),
            Command::StartValidation {
                campaign,
                task,
                reserve,
                expert,
            } => self.start_procedure(campaign, task, Some(reserve), expert),
            Command::StartCrowdFilter { campaign, task, expert } => self.start_procedure(campaign, task, None, expert),
            Command::UploadExpertSheet { campaign, task, csv } => self.upload_sheet(campaign, task, csv),
            Command::CloseCampaign { campaign } => {
                let c = self.campaign_mut(campaign)?;
                c.require(&[Lifecycle::Active], "close")?;
                c.lifecycle = Lifecycle::Closed;
                Ok(CommandOutput::Done)
            }
            Command::FinalizeCampaign { campaign } => self.finalize(campaign),
            Command::CreateReverseCampaign {
                from,
                description,
                date,
                config,
            } => self.create_reverse(from, description, date, config),
        }
    }

    fn create_campaign(
        &mut self,
        description: &str,
        date: &str,
        config: &CampaignConfig,
        source: Vec<EntryId>,
        target: Vec<EntryId>,
        reverse_of: Option<CampaignId>,
    ) -> Result<CommandOutput, PlatformError> {
        config.validate()?;
        self.next_campaign += 1;
        let id = CampaignId::new(format!("exp-{}", self.next_campaign));
        self.campaigns.insert(
            id.clone(),
            CampaignState {
                id: id.clone(),
                description: description.to_string(),
                date: date.to_string(),
                config: config.clone(),
                lifecycle: Lifecycle::Draft,
                source,
                target,
                guidelines: campaign::default_guidelines(),
                acq_bank: Vec::new(),
                tasks: Vec::new(),
                reverse_of,
            },
        );
        Ok(CommandOutput::CampaignCreated { campaign: id })
    }

    fn upload_dataset(&mut self, id: &CampaignId, csv: &str, source: bool) -> Result<CommandOutput, PlatformError> {
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Draft], "upload datasets to")?;
        let language = if source {
            c.config.source_language.clone()
        } else {
            c.config.target_language.clone()
        };
        let rows = parse_dataset(csv).map_err(|e| PlatformError::Invalid(e.to_string()))?;
        if rows.is_empty() {
            return Err(CampaignError::EmptyDataset(if source { "source" } else { "target" }).into());
        }
        let mut lexicon = self.lexicon.clone();
        let mut ids = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let gloss = row
                .gloss
                .as_deref()
                .ok_or_else(|| PlatformError::Invalid(format!("row {}: {:?} has no gloss", i + 2, row.word)))?;
            let id = lexicon.find_or_add_entry(&language, &row.word, gloss, EntryProvenance::Imported)?;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        self.lexicon = lexicon;
        let n = ids.len();
        let c = self.campaign_mut(id)?;
        if source {
            c.source = ids;
        } else {
            c.target = ids;
        }
        Ok(CommandOutput::Uploaded { rows: n })
    }

    fn upload_acq_bank(&mut self, id: &CampaignId, csv: &str) -> Result<CommandOutput, PlatformError> {
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Draft], "upload an ACQ bank to")?;
        let language = c.config.target_language.clone();
        let targets: Vec<EntryId> = c.target.clone();
        let lexicon = &self.lexicon;
        let resolve = |word: &str| -> Vec<EntryId> {
            lexicon
                .entries_with_lemma(&language, word)
                .map(|e| e.id.clone())
                .filter(|e| targets.contains(e))
                .collect()
        };
        let bank = parse_acq_bank(csv, &resolve)?;
        let n = bank.len();
        self.campaign_mut(id)?.acq_bank = bank;
        Ok(CommandOutput::Uploaded { rows: n })
    }

    fn generate(&mut self, id: &CampaignId) -> Result<CommandOutput, PlatformError> {
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Draft], "generate tasks for")?;
        if c.target.is_empty() {
            return Err(CampaignError::EmptyDataset("target").into());
        }
        let tasks = generate_tasks(&c.source, &c.acq_bank, &c.config)?;
        let c = self.campaign_mut(id)?;
        let names = tasks.iter().map(|t| t.task_id.clone()).collect();
        c.tasks = tasks.into_iter().map(TaskState::new).collect();
        c.lifecycle = Lifecycle::Active;
        Ok(CommandOutput::TasksGenerated { tasks: names })
    }

    fn check_workers(&self, ids: &[WorkerId], allow_expert: bool) -> Result<(), PlatformError> {
        for w in ids {
            let worker = self.workers.get(w).ok_or_else(|| PlatformError::UnknownWorker(w.clone()))?;
            if worker.role == WorkerRole::Expert && !allow_expert {
                return Err(PlatformError::Invalid(format!("{w} is an expert")));
            }
        }
        Ok(())
    }

    fn assign(&mut self, id: &CampaignId, task: &str, group: &[WorkerId]) -> Result<CommandOutput, PlatformError> {
        self.check_workers(group, false)?;
        let c = self.campaign_mut(id)?;
        c.require(&[Lifecycle::Active], "assign tasks in")?;
        let i = c.task_index(task)?;
        c.tasks[i].assign(group)?;
        Ok(CommandOutput::Done)
    }

    fn start_session(&mut self, id: &CampaignId, task: &str, worker: &WorkerId) -> Result<CommandOutput, PlatformError> {
        if !self.workers.contains_key(worker) {
            return Err(PlatformError::UnknownWorker(worker.clone()));
        }
        let c = self.campaign(id)?;
        if c.lifecycle != Lifecycle::Active {
            return Err(PlatformError::TaskClosed);
        }
        let ti = c.task_index(task)?;
        let t = &c.tasks[ti];
        let round_index = t.rounds.len().checked_sub(1).ok_or_else(|| {
            PlatformError::Conflict(format!("task {task} has no assigned group"))
        })?;
        let round = &t.rounds[round_index];
        if round.closed {
            return Err(PlatformError::TaskClosed);
        }
        if !round.participants.contains(worker) {
            return Err(PlatformError::Conflict(format!("{worker} is not assigned to the open round of {task}")));
        }
        if let Some(existing) = round.sessions.get(worker) {
            return Ok(CommandOutput::SessionStarted {
                session: existing.clone(),
            });
        }
        let items = t.task.items.clone();
        self.next_session += 1;
        let sid = format!("s-{}", self.next_session);
        let session = WorkerSession::new(sid.clone(), worker.clone(), task, items);
        self.sessions.insert(
            sid.clone(),
            SessionRecord {
                campaign: id.clone(),
                task: ti,
                round: round_index,
                session,
            },
        );
        self.campaign_mut(id)?.tasks[ti].rounds[round_index]
            .sessions
            .insert(worker.clone(), sid.clone());
        Ok(CommandOutput::SessionStarted { session: sid })
    }

    /// Word, gloss and candidate list for prompts of a campaign task.
    pub fn catalog(&self, id: &CampaignId, task: usize) -> Result<TaskCatalog, PlatformError> {
        let c = self.campaign(id)?;
        let t = c.tasks.get(task).ok_or_else(|| PlatformError::UnknownTask(task.to_string()))?;
        let mut items = BTreeMap::new();
        for item in &t.task.items {
            let shown = match t.task.acq_items.get(item) {
                Some(acq) => (acq.word.clone(), acq.gloss.clone()),
                None => match self.lexicon.entry(item) {
                    Some(e) => (e.word.clone(), e.gloss.clone()),
                    None => (item.to_string(), String::new()),
                },
            };
            items.insert(item.clone(), shown);
        }
        let candidates = c
            .target
            .iter()
            .filter_map(|id| self.lexicon.entry(id))
            .map(|e| Candidate {
                id: e.id.clone(),
                word: e.word.clone(),
                gloss: e.gloss.clone(),
            })
            .collect();
        Ok(TaskCatalog {
            items,
            candidates,
            target_language: c.config.target_language.to_string(),
        })
    }

    pub fn next_prompt(&self, session: &str) -> Result<Prompt, PlatformError> {
        let rec = self.session(session)?;
        let c = self.campaign(&rec.campaign)?;
        let round = &c.tasks[rec.task].rounds[rec.round];
        if c.lifecycle != Lifecycle::Active || (round.closed && !rec.session.is_complete()) {
            return Err(PlatformError::TaskClosed);
        }
        Ok(rec.session.next_prompt(&self.catalog(&rec.campaign, rec.task)?)?)
    }

    fn with_session(
        &mut self,
        session: &str,
        f: impl FnOnce(&mut WorkerSession, &TaskCatalog) -> Result<CommandOutput, CampaignError>,
    ) -> Result<CommandOutput, PlatformError> {
        let rec = self.session(session)?.clone();
        let c = self.campaign(&rec.campaign)?;
        if c.lifecycle != Lifecycle::Active {
            return Err(PlatformError::TaskClosed);
        }
        let mut task = c.tasks[rec.task].clone();
        if task.rounds[rec.round].closed {
            return Err(PlatformError::TaskClosed);
        }
        let config = c.config.clone();
        let catalog = self.catalog(&rec.campaign, rec.task)?;
        let mut s = rec.session.clone();
        let out = f(&mut s, &catalog)?;
        if let CommandOutput::Answer {
            submission: Submission::Stored { response },
        } = &out
        {
            task.responses.push(response.clone());
        }
        let slot = &mut self.sessions.get_mut(session).expect("looked up above").session;
        let previous = std::mem::replace(slot, s);
        match task.settle(&config, &self.sessions, &self.lexicon) {
            Ok(effects) => {
                self.commit_task(&rec.campaign, rec.task, task, effects)?;
                Ok(out)
            }
            Err(e) => {
                self.sessions.get_mut(session).expect("looked up above").session = previous;
                Err(e)
            }
        }
    }

    fn commit_task(
        &mut self,
        id: &CampaignId,
        index: usize,
        task: TaskState,
        effects: task::Effects,
    ) -> Result<(), PlatformError> {
        for (w, status) in effects.statuses {
            if let Some(worker) = self.workers.get_mut(&w) {
                if worker.role != WorkerRole::Expert {
                    worker.status = status;
                }
            }
        }
        self.campaign_mut(id)?.tasks[index] = task;
        Ok(())
    }

    fn close_task(&mut self, id: &CampaignId, task: &str) -> Result<CommandOutput, PlatformError> {
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Active], "close tasks of")?;
        let ti = c.task_index(task)?;
        let config = c.config.clone();
        let mut t = c.tasks[ti].clone();
        let round = t
            .rounds
            .last_mut()
            .ok_or_else(|| PlatformError::Conflict(format!("task {task} has no assigned group")))?;
        if round.closed {
            return Err(PlatformError::Conflict(format!("task {task} has no open round")));
        }
        let mut sessions = self.sessions.clone();
        for sid in round.sessions.values() {
            let s = &mut sessions.get_mut(sid).expect("round sessions are registered").session;
            if !s.is_complete() {
                s.withdraw();
            }
        }
        round.closed = true;
        let effects = t.settle(&config, &sessions, &self.lexicon)?;
        self.sessions = sessions;
        let phase = t.phase.name().to_string();
        self.commit_task(id, ti, t, effects)?;
        Ok(CommandOutput::TaskPhase { phase })
    }

    fn start_procedure(
        &mut self,
        id: &CampaignId,
        task: &str,
        reserve: Option<&Vec<WorkerId>>,
        expert: &WorkerId,
    ) -> Result<CommandOutput, PlatformError> {
        let worker = self.workers.get(expert).ok_or_else(|| PlatformError::UnknownWorker(expert.clone()))?;
        if worker.role != WorkerRole::Expert {
            return Err(PlatformError::Invalid(format!("{expert} is not an expert")));
        }
        if let Some(r) = reserve {
            self.check_workers(r, false)?;
        }
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Active], "validate tasks of")?;
        let ti = c.task_index(task)?;
        let config = c.config.clone();
        let mut t = c.tasks[ti].clone();
        let mut effects = t.start(&config, &self.lexicon, reserve.map(|r| r.as_slice()), expert)?;
        effects.statuses.extend(t.settle(&config, &self.sessions, &self.lexicon)?.statuses);
        let phase = t.phase.name().to_string();
        self.commit_task(id, ti, t, effects)?;
        Ok(CommandOutput::TaskPhase { phase })
    }

    fn upload_sheet(&mut self, id: &CampaignId, task: &str, csv: &str) -> Result<CommandOutput, PlatformError> {
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Active, Lifecycle::Closed], "upload expert sheets to")?;
        let ti = c.task_index(task)?;
        let mut t = c.tasks[ti].clone();
        let config = c.config.clone();
        t.resolve_with_sheet(csv, &config, &self.lexicon)?;
        let phase = t.phase.name().to_string();
        self.campaign_mut(id)?.tasks[ti] = t;
        Ok(CommandOutput::TaskPhase { phase })
    }

    pub fn expert_sheet_csv(&self, id: &CampaignId, task: &str) -> Result<String, PlatformError> {
        let c = self.campaign(id)?;
        let t = &c.tasks[c.task_index(task)?];
        match &t.phase {
            TaskPhase::AwaitingExpert { sheet, .. } => Ok(sheet_to_csv(&sheet.rows)),
            other => Err(PlatformError::Conflict(format!(
                "task {task} has no pending expert sheet ({})",
                other.name()
            ))),
        }
    }

    fn finalize(&mut self, id: &CampaignId) -> Result<CommandOutput, PlatformError> {
        let c = self.campaign(id)?;
        c.require(&[Lifecycle::Closed], "finalize")?;
        if let Some(t) = c.tasks.iter().find(|t| !t.phase.is_terminal()) {
            return Err(PlatformError::Conflict(format!(
                "task {} is not resolved ({})",
                t.task.task_id,
                t.phase.name()
            )));
        }
        let source_lang = c.config.source_language.clone();
        let target_lang = c.config.target_language.clone();
        let records = c.records();
        let mut lexicon = self.lexicon.clone();
        for r in &records {
            write_record(&mut lexicon, r, &source_lang, &target_lang, id)?;
        }
        self.lexicon = lexicon;
        self.campaign_mut(id)?.lifecycle = Lifecycle::Finalized;
        Ok(CommandOutput::Done)
    }

    fn create_reverse(
        &mut self,
        from: &CampaignId,
        description: &str,
        date: &str,
        config: &CampaignConfig,
    ) -> Result<CommandOutput, PlatformError> {
        let d1 = self.campaign(from)?;
        if d1.lifecycle != Lifecycle::Finalized {
            return Err(CampaignError::Direction1NotFinal.into());
        }
        if config.source_language != d1.config.target_language || config.target_language != d1.config.source_language
        {
            return Err(PlatformError::Invalid("reverse campaign must swap the languages".into()));
        }
        let targets: Vec<_> = d1.target.iter().filter_map(|id| self.lexicon.entry(id).cloned()).collect();
        let source = derive_reverse_dataset(&d1.records(), &targets)
            .into_iter()
            .map(|e| e.id)
            .collect();
        let target = d1.source.clone();
        self.create_campaign(description, date, config, source, target, Some(from.clone()))
    }

    /// Per-task table of a finalized campaign.
    pub fn report(&self, id: &CampaignId) -> Result<CampaignReport, PlatformError> {
        let c = self.campaign(id)?;
        if c.lifecycle != Lifecycle::Finalized {
            return Err(CampaignError::NotFinal.into());
        }
        let rows: Vec<(String, Vec<FinalRecord>, Option<Alpha>)> = c
            .tasks
            .iter()
            .filter_map(|t| match &t.phase {
                TaskPhase::Resolved { records, alpha, .. } => Some((t.task.task_id.clone(), records.clone(), *alpha)),
                _ => None,
            })
            .collect();
        Ok(campaign_report(&rows))
    }

    pub fn export_lexicon(&self, language: &LanguageCode) -> Result<LexiconDocument, PlatformError> {
        Ok(self.lexicon.export_lexicon(language)?)
    }

    pub fn microtask(&self, id: &CampaignId, task: &str) -> Result<&Microtask, PlatformError> {
        let c = self.campaign(id)?;
        Ok(&c.tasks[c.task_index(task)?].task)
    }
}

fn write_record(
    lexicon: &mut Lexicon,
    record: &FinalRecord,
    source_lang: &LanguageCode,
    target_lang: &LanguageCode,
    campaign: &CampaignId,
) -> Result<(), PlatformError> {
    let source = lexicon
        .entry(&record.item)
        .cloned()
        .ok_or_else(|| LexiconError::UnknownEntry(record.item.clone()))?;
    debug_assert_eq!(&source.language, source_lang);
    match &record.outcome {
        FinalOutcome::Gap => {
            let concept = lexicon.ensure_concept(&record.item)?;
            let provenance = match record.provenance {
                RecordProvenance::Crowd => GapProvenance::Crowd,
                RecordProvenance::ExpertCorrected => GapProvenance::Expert,
            };
            lexicon.assert_gap(&concept, target_lang, provenance, Some(campaign.to_string()))?;
        }
        FinalOutcome::Equivalent { targets } => {
            for t in targets {
                let target = match t {
                    EntryRef::Existing { id } => id.clone(),
                    EntryRef::New { lemma, gloss } => {
                        let provenance = match record.provenance {
                            RecordProvenance::Crowd => EntryProvenance::CrowdNew,
                            RecordProvenance::ExpertCorrected => EntryProvenance::ExpertCorrected,
                        };
                        let gloss = if gloss.trim().is_empty() { &source.gloss } else { gloss };
                        lexicon.find_or_add_entry(target_lang, lemma, gloss, provenance)?
                    }
                };
                lexicon.link_equivalent(&record.item, &target)?;
            }
        }
    }
    Ok(())
}

impl TaskPhase {
    pub fn name(&self) -> &'static str {
        match self {
            TaskPhase::Collecting => "collecting",
            TaskPhase::Running { .. } => "running",
            TaskPhase::Qualified { .. } => "qualified",
            TaskPhase::AwaitingExpert { .. } => "awaiting_expert",
            TaskPhase::Resolved { .. } => "resolved",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, TaskPhase::Qualified { .. } | TaskPhase::Resolved { .. })
    }
}

pub(crate) fn mark(statuses: &mut Vec<(WorkerId, WorkerStatus)>, workers: impl IntoIterator<Item = WorkerId>, s: WorkerStatus) {
    statuses.extend(workers.into_iter().map(|w| (w, s)));
}
