use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CampaignError, Response};
use crate::agreement::AnswerCategory;
use crate::ids::{EntryId, WorkerId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: EntryId,
    pub word: String,
    pub gloss: String,
}

/// What a session needs to render prompts for one task.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskCatalog {
    /// Word and gloss of every item, ACQs included.
    pub items: BTreeMap<EntryId, (String, String)>,
    pub candidates: Vec<Candidate>,
    pub target_language: String,
}

impl TaskCatalog {
    fn describe(&self, item: &EntryId) -> (String, String) {
        self.items.get(item).cloned().unwrap_or_else(|| (item.to_string(), String::new()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStep {
    Step1,
    Step2,
    Step3,
    Done,
}

impl fmt::Display for SessionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStep::Step1 => "step1",
            SessionStep::Step2 => "step2",
            SessionStep::Step3 => "step3",
            SessionStep::Done => "done",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SessionInput {
    Yes,
    No,
    DontKnow,
    Select { targets: Vec<EntryId> },
    NotInList,
    NewWord { lemma: String, gloss: String },
    Back,
}

impl fmt::Display for SessionInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionInput::Yes => "yes",
            SessionInput::No => "no",
            SessionInput::DontKnow => "dont_know",
            SessionInput::Select { .. } => "select",
            SessionInput::NotInList => "not_in_list",
            SessionInput::NewWord { .. } => "new_word",
            SessionInput::Back => "back",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Prompt {
    Step1 {
        item: EntryId,
        position: usize,
        total: usize,
        word: String,
        gloss: String,
        question: String,
    },
    Step2 {
        item: EntryId,
        word: String,
        gloss: String,
        candidates: Vec<Candidate>,
    },
    Step3 {
        item: EntryId,
        word: String,
        gloss: String,
    },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Submission {
    Stored { response: Response },
    Moved { step: SessionStep },
    /// Repeat of the last accepted submission; nothing changed.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LastSubmission {
    item: EntryId,
    step: SessionStep,
    input: SessionInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSession {
    pub session_id: String,
    pub worker: WorkerId,
    pub task_id: String,
    pub items: Vec<EntryId>,
    pub cursor: usize,
    pub step: SessionStep,
    pub consent: Option<bool>,
    pub withdrawn: bool,
    item_started_ms: u64,
    last: Option<LastSubmission>,
}

impl WorkerSession {
    pub fn new(session_id: impl Into<String>, worker: WorkerId, task_id: impl Into<String>, items: Vec<EntryId>) -> Self {
        let step = if items.is_empty() { SessionStep::Done } else { SessionStep::Step1 };
        Self {
            session_id: session_id.into(),
            worker,
            task_id: task_id.into(),
            items,
            cursor: 0,
            step,
            consent: None,
            withdrawn: false,
            item_started_ms: 0,
            last: None,
        }
    }

    pub fn current_item(&self) -> Option<&EntryId> {
        (self.step != SessionStep::Done).then(|| &self.items[self.cursor])
    }

    pub fn is_complete(&self) -> bool {
        self.step == SessionStep::Done && !self.withdrawn && self.consent == Some(true)
    }

    /// Declining closes the session.
    pub fn record_consent(&mut self, accept: bool, now_ms: u64) -> Result<(), CampaignError> {
        if self.consent.is_some() || self.withdrawn {
            return Err(CampaignError::InvalidTransition {
                step: self.step.to_string(),
                input: "consent".into(),
            });
        }
        self.consent = Some(accept);
        self.item_started_ms = now_ms;
        if !accept {
            self.step = SessionStep::Done;
        }
        Ok(())
    }

    pub fn withdraw(&mut self) {
        self.withdrawn = true;
        self.step = SessionStep::Done;
    }

    fn check_open(&self) -> Result<(), CampaignError> {
        match self.consent {
            None => Err(CampaignError::NotConsented),
            Some(false) => Err(CampaignError::SessionDone),
            Some(true) if self.withdrawn => Err(CampaignError::SessionDone),
            Some(true) => Ok(()),
        }
    }

    pub fn next_prompt(&self, catalog: &TaskCatalog) -> Result<Prompt, CampaignError> {
        self.check_open()?;
        let Some(item) = self.current_item().cloned() else {
            return Ok(Prompt::Done);
        };
        let (word, gloss) = catalog.describe(&item);
        Ok(match self.step {
            SessionStep::Step1 => Prompt::Step1 {
                position: self.cursor + 1,
                total: self.items.len(),
                question: format!("Does {} have an equivalent for this word?", catalog.target_language),
                item,
                word,
                gloss,
            },
            SessionStep::Step2 => Prompt::Step2 {
                item,
                word,
                gloss,
                candidates: catalog.candidates.clone(),
            },
            SessionStep::Step3 => Prompt::Step3 { item, word, gloss },
            SessionStep::Done => Prompt::Done,
        })
    }

    /// Applies `input` if the session is at (`item`, `step`). Resubmitting the
    /// last accepted input is a no-op.
    pub fn submit(
        &mut self,
        item: &EntryId,
        step: SessionStep,
        input: SessionInput,
        catalog: &TaskCatalog,
        now_ms: u64,
    ) -> Result<Submission, CampaignError> {
        self.check_open()?;
        let invalid = |s: SessionStep, i: &SessionInput| CampaignError::InvalidTransition {
            step: s.to_string(),
            input: i.to_string(),
        };
        if self.current_item() != Some(item) || self.step != step {
            let repeat = self
                .last
                .as_ref()
                .is_some_and(|l| l.item == *item && l.step == step && l.input == input);
            if repeat {
                return Ok(Submission::Duplicate);
            }
            if self.step == SessionStep::Done {
                return Err(CampaignError::SessionDone);
            }
            return Err(invalid(self.step, &input));
        }

        let stored = match (self.step, &input) {
            (SessionStep::Step1, SessionInput::No) => Some(AnswerCategory::Gap),
            (SessionStep::Step1, SessionInput::DontKnow) => Some(AnswerCategory::DontKnow),
            (SessionStep::Step1, SessionInput::Yes) => {
                self.step = SessionStep::Step2;
                None
            }
            (SessionStep::Step2, SessionInput::Select { targets }) => {
                if targets.is_empty() {
                    return Err(CampaignError::EmptySelection);
                }
                let known: BTreeSet<&EntryId> = catalog.candidates.iter().map(|c| &c.id).collect();
                if let Some(t) = targets.iter().find(|t| !known.contains(t)) {
                    return Err(CampaignError::UnknownCandidate(t.clone()));
                }
                Some(AnswerCategory::equivalent(targets.iter().cloned()))
            }
            (SessionStep::Step2, SessionInput::NotInList) => {
                self.step = SessionStep::Step3;
                None
            }
            (SessionStep::Step3, SessionInput::NewWord { lemma, gloss }) => {
                if lemma.trim().is_empty() {
                    return Err(CampaignError::EmptyNewWord);
                }
                Some(AnswerCategory::new_word(lemma.trim(), gloss.trim()))
            }
            (SessionStep::Step2 | SessionStep::Step3, SessionInput::Back) => {
                self.step = SessionStep::Step1;
                None
            }
            (s, i) => return Err(invalid(s, i)),
        };
        self.last = Some(LastSubmission {
            item: item.clone(),
            step,
            input,
        });

        let Some(answer) = stored else {
            return Ok(Submission::Moved { step: self.step });
        };
        let elapsed_ms = now_ms.saturating_sub(self.item_started_ms).max(1);
        let response = Response {
            task: self.task_id.clone(),
            item: item.clone(),
            worker: self.worker.clone(),
            answer,
            duration_seconds: elapsed_ms as f64 / 1000.0,
            submitted_at_ms: now_ms,
        };
        self.cursor += 1;
        self.item_started_ms = now_ms;
        self.step = if self.cursor == self.items.len() {
            SessionStep::Done
        } else {
            SessionStep::Step1
        };
        Ok(Submission::Stored { response })
    }
}
