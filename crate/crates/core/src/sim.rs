//! Seeded synthetic campaigns with planted ground truth.
//!
//! Every source entry gets a planted outcome. Synthetic workers answer
//! through the same session commands a human would, deviating from the
//! truth with probability `1 - accuracy`: a deviation is either
//! "I don't know" or a new word unique to that worker, so no two
//! deviations ever agree. The expert answers every sheet row from the
//! truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::AnswerCategory;
use crate::campaign::{CampaignConfig, CampaignReport, Prompt, SessionInput, SessionStep};
use crate::ids::{CampaignId, EntryId, LanguageCode, WorkerId};
use crate::ingestion::{write_dataset, CandidateEntry};
use crate::platform::{Command, CommandOutput, Platform, PlatformError, TaskPhase};
use crate::workflow::{sheet_to_csv, EntryRef, ExpertDecision, RowKind, WorkerRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub entries: usize,
    pub workers: usize,
    pub reserves: usize,
    pub accuracy: f64,
    pub reserve_accuracy: f64,
    /// Share of deviations answered with "I don't know".
    pub dont_know_share: f64,
    pub questions_per_task: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            entries: 100,
            workers: 3,
            reserves: 3,
            accuracy: 1.0,
            reserve_accuracy: 1.0,
            dont_know_share: 0.5,
            questions_per_task: 35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Planted {
    Gap,
    Equivalent { target: EntryId },
    NewWord { lemma: String, gloss: String },
}

impl Planted {
    pub fn answer(&self) -> AnswerCategory {
        match self {
            Planted::Gap => AnswerCategory::Gap,
            Planted::Equivalent { target } => AnswerCategory::equivalent([target.clone()]),
            Planted::NewWord { lemma, gloss } => AnswerCategory::new_word(lemma, gloss),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAnswer {
    pub task: String,
    pub worker: WorkerId,
    pub item: EntryId,
    pub answer: AnswerCategory,
    pub deviated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub task_id: String,
    /// Participants of the run the validation accepted.
    pub accepted_participants: Option<Vec<WorkerId>>,
    pub expert_queue: BTreeSet<EntryId>,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub platform: Platform,
    pub campaign: CampaignId,
    pub source_language: LanguageCode,
    pub target_language: LanguageCode,
    /// Every successful command, in order.
    pub log: Vec<Command>,
    pub truth: BTreeMap<EntryId, Planted>,
    pub answers: Vec<SimAnswer>,
    pub tasks: Vec<SimTask>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation: {0}")]
    Invalid(String),
    #[error("{command}: {source}")]
    Platform {
        command: &'static str,
        source: PlatformError,
    },
}

struct Driver {
    platform: Platform,
    log: Vec<Command>,
    now_ms: u64,
    rng: ChaCha8Rng,
}

impl Driver {
    fn run(&mut self, command: Command) -> Result<CommandOutput, SimError> {
        let name = command.name();
        let out = self
            .platform
            .apply(&command)
            .map_err(|source| SimError::Platform { command: name, source })?;
        self.log.push(command);
        Ok(out)
    }
}

fn lang(code: &str) -> LanguageCode {
    LanguageCode::new(code).expect("static language code")
}

fn inputs_for(answer: &AnswerCategory) -> Vec<(SessionStep, SessionInput)> {
    match answer {
        AnswerCategory::Gap => vec![(SessionStep::Step1, SessionInput::No)],
        AnswerCategory::DontKnow => vec![(SessionStep::Step1, SessionInput::DontKnow)],
        AnswerCategory::Equivalent { targets } => vec![
            (SessionStep::Step1, SessionInput::Yes),
            (
                SessionStep::Step2,
                SessionInput::Select {
                    targets: targets.iter().cloned().collect(),
                },
            ),
        ],
        AnswerCategory::NewWord { lemma, gloss } => vec![
            (SessionStep::Step1, SessionInput::Yes),
            (SessionStep::Step2, SessionInput::NotInList),
            (
                SessionStep::Step3,
                SessionInput::NewWord {
                    lemma: lemma.clone(),
                    gloss: gloss.clone(),
                },
            ),
        ],
    }
}

fn expert_decision(truth: &Planted, answer: &AnswerCategory) -> ExpertDecision {
    if *answer == truth.answer() && !matches!(truth, Planted::Gap) {
        return ExpertDecision::ConfirmWord;
    }
    let target = match truth {
        Planted::Gap if *answer == AnswerCategory::DontKnow => return ExpertDecision::ResolveGap,
        Planted::Gap => return ExpertDecision::ConfirmGap,
        Planted::Equivalent { target } => EntryRef::existing(target.clone()),
        Planted::NewWord { lemma, gloss } => EntryRef::new_word(lemma.clone(), gloss.clone()),
    };
    match answer {
        AnswerCategory::DontKnow => ExpertDecision::ResolveWord { target },
        AnswerCategory::Gap => ExpertDecision::RejectGap { target },
        _ => ExpertDecision::CorrectWord { target },
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimOutcome, SimError> {
    if config.entries == 0 || config.workers < 2 || config.reserves == 0 {
        return Err(SimError::Invalid(
            "need at least one entry, two workers and one reserve".into(),
        ));
    }
    for p in [config.accuracy, config.reserve_accuracy, config.dont_know_share] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::Invalid(format!("probability {p} not in [0, 1]")));
        }
    }
    let (src, tgt) = (lang("eng"), lang("arb"));
    let mut d = Driver {
        platform: Platform::new(),
        log: Vec::new(),
        now_ms: 0,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };

    let mut campaign_config = CampaignConfig::new(src.clone(), tgt.clone(), "food");
    campaign_config.questions_per_task = config.questions_per_task;
    campaign_config.acqs_per_task = (config.questions_per_task / 10).max(1);
    campaign_config.sheet_seed = config.seed;
    let CommandOutput::CampaignCreated { campaign } = d.run(Command::CreateCampaign {
        description: "synthetic campaign".into(),
        date: "2024-01-01".into(),
        config: campaign_config.clone(),
    })?
    else {
        unreachable!("create returns the campaign id")
    };

    // planted outcomes: 40% equivalent, 40% gap, 20% new word
    let mut kinds = Vec::with_capacity(config.entries);
    for _ in 0..config.entries {
        kinds.push(d.rng.random_range(0..10u8));
    }
    let source_rows: Vec<CandidateEntry> = (0..config.entries)
        .map(|i| CandidateEntry::new(format!("src{i}"), Some(format!("source meaning {i}"))))
        .collect();
    let mut target_rows: Vec<CandidateEntry> = kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| **k < 4)
        .map(|(i, _)| CandidateEntry::new(format!("tgt{i}"), Some(format!("target meaning {i}"))))
        .collect();
    for j in 0..config.entries.div_ceil(2) {
        target_rows.push(CandidateEntry::new(format!("other{j}"), Some(format!("unrelated meaning {j}"))));
    }
    d.run(Command::UploadSource {
        campaign: campaign.clone(),
        csv: write_dataset(&source_rows),
    })?;
    d.run(Command::UploadTarget {
        campaign: campaign.clone(),
        csv: write_dataset(&target_rows),
    })?;
    let acq_rows = [
        ("acqword1", "check meaning one", "GAP".to_string()),
        ("acqword2", "check meaning two", "other0".to_string()),
        ("acqword3", "check meaning three", "GAP".to_string()),
    ];
    let mut bank = String::from("word,gloss,expected_answer\n");
    for (w, g, e) in &acq_rows {
        bank.push_str(&format!("{w},{g},{e}\n"));
    }
    d.run(Command::UploadAcqBank {
        campaign: campaign.clone(),
        csv: bank,
    })?;

    let state = d.platform.campaign(&campaign).expect("created above");
    let mut truth = BTreeMap::new();
    for (i, id) in state.source.clone().into_iter().enumerate() {
        let planted = match kinds[i] {
            0..=3 => {
                let target = d
                    .platform
                    .lexicon
                    .find_entry(&tgt, &format!("tgt{i}"), &format!("target meaning {i}"))
                    .expect("uploaded above")
                    .clone();
                Planted::Equivalent { target }
            }
            4..=7 => Planted::Gap,
            _ => Planted::NewWord {
                lemma: format!("new{i}"),
                gloss: format!("coined meaning {i}"),
            },
        };
        truth.insert(id, planted);
    }

    let workers: Vec<WorkerId> = (1..=config.workers).map(|i| WorkerId::new(format!("w{i}"))).collect();
    let reserves: Vec<WorkerId> = (1..=config.reserves).map(|i| WorkerId::new(format!("r{i}"))).collect();
    let expert = WorkerId::new("expert");
    for w in workers.iter().chain(&reserves) {
        d.run(Command::RegisterWorker {
            worker: w.clone(),
            role: WorkerRole::Qualified,
        })?;
    }
    d.run(Command::RegisterWorker {
        worker: expert.clone(),
        role: WorkerRole::Expert,
    })?;
    let CommandOutput::TasksGenerated { tasks } = d.run(Command::GenerateTasks {
        campaign: campaign.clone(),
    })?
    else {
        unreachable!("generate returns the task ids")
    };

    let mut answers = Vec::new();
    let mut sim_tasks = Vec::new();
    for task in &tasks {
        d.run(Command::AssignTask {
            campaign: campaign.clone(),
            task: task.clone(),
            group: workers.clone(),
        })?;
        for w in &workers {
            work_session(&mut d, &campaign, task, w, config.accuracy, config, &truth, &mut answers)?;
        }
        d.run(Command::StartValidation {
            campaign: campaign.clone(),
            task: task.clone(),
            reserve: reserves.clone(),
            expert: expert.clone(),
        })?;
        loop {
            let state = d.platform.campaign(&campaign).expect("exists");
            let t = &state.tasks[state.tasks.iter().position(|t| &t.task.task_id == task).expect("generated")];
            if !matches!(t.phase, TaskPhase::Running { .. }) {
                break;
            }
            let round = t.rounds.last().expect("running tasks have rounds");
            let waiting: Vec<WorkerId> = round
                .awaiting
                .iter()
                .filter(|w| !round.sessions.contains_key(*w))
                .cloned()
                .collect();
            if waiting.is_empty() {
                return Err(SimError::Invalid(format!("task {task} stalled")));
            }
            for w in waiting {
                let accuracy = if reserves.contains(&w) {
                    config.reserve_accuracy
                } else {
                    config.accuracy
                };
                work_session(&mut d, &campaign, task, &w, accuracy, config, &truth, &mut answers)?;
            }
        }

        let state = d.platform.campaign(&campaign).expect("exists");
        let t = state.tasks.iter().find(|t| &t.task.task_id == task).expect("generated").clone();
        let (outcome, sheet) = match &t.phase {
            TaskPhase::AwaitingExpert { outcome, sheet } => (outcome.clone(), Some(sheet.clone())),
            TaskPhase::Resolved { outcome, .. } => (outcome.clone(), None),
            other => return Err(SimError::Invalid(format!("task {task} ended in {}", other.name()))),
        };
        if let Some(mut sheet) = sheet {
            for row in sheet.rows.iter_mut().filter(|r| r.row_kind != RowKind::Sanity) {
                row.expert_decision = Some(expert_decision(&truth[&row.item], &row.worker_answer));
            }
            d.run(Command::UploadExpertSheet {
                campaign: campaign.clone(),
                task: task.clone(),
                csv: sheet_to_csv(&sheet.rows),
            })?;
        }
        let accepted_participants = t.accepted_run().map(|r| r.participants.clone()).or_else(|| {
            outcome.accepted_run.as_ref().and_then(|id| {
                t.rounds
                    .iter()
                    .filter_map(|r| r.run.as_ref())
                    .find(|r| &r.run_id == id)
                    .map(|r| r.participants.clone())
            })
        });
        sim_tasks.push(SimTask {
            task_id: task.clone(),
            accepted_participants,
            expert_queue: outcome.expert_queue.iter().map(|q| q.item.clone()).collect(),
            runs: outcome.history.len(),
        });
    }

    d.run(Command::CloseCampaign {
        campaign: campaign.clone(),
    })?;
    d.run(Command::FinalizeCampaign {
        campaign: campaign.clone(),
    })?;
    Ok(SimOutcome {
        platform: d.platform,
        campaign,
        source_language: src,
        target_language: tgt,
        log: d.log,
        truth,
        answers,
        tasks: sim_tasks,
    })
}

#[allow(clippy::too_many_arguments)]
fn work_session(
    d: &mut Driver,
    campaign: &CampaignId,
    task: &str,
    worker: &WorkerId,
    accuracy: f64,
    config: &SimConfig,
    truth: &BTreeMap<EntryId, Planted>,
    log: &mut Vec<SimAnswer>,
) -> Result<(), SimError> {
    let at_ms = d.now_ms;
    let CommandOutput::SessionStarted { session } = d.run(Command::StartSession {
        campaign: campaign.clone(),
        task: task.to_string(),
        worker: worker.clone(),
        at_ms,
    })?
    else {
        unreachable!("start returns the session id")
    };
    d.run(Command::Consent {
        session: session.clone(),
        accept: true,
        at_ms,
    })?;
    let microtask = d.platform.microtask(campaign, task).expect("exists").clone();
    loop {
        let prompt = d.platform.next_prompt(&session).map_err(|source| SimError::Platform {
            command: "next_prompt",
            source,
        })?;
        let item = match prompt {
            Prompt::Step1 { item, .. } => item,
            Prompt::Done => return Ok(()),
            _ => return Err(SimError::Invalid("session resumed mid-item".into())),
        };
        let (answer, deviated) = if let Some(acq) = microtask.acq_items.get(&item) {
            (acq.expected.clone(), false)
        } else if d.rng.random_bool(accuracy) {
            (truth[&item].answer(), false)
        } else if d.rng.random_bool(config.dont_know_share) {
            (AnswerCategory::DontKnow, true)
        } else {
            (
                AnswerCategory::new_word(format!("{worker}-guess-{item}"), "a guessed meaning"),
                true,
            )
        };
        d.now_ms += d.rng.random_range(20_000..60_000);
        for (step, input) in inputs_for(&answer) {
            d.run(Command::SubmitAnswer {
                session: session.clone(),
                item: item.clone(),
                step,
                input,
                at_ms: d.now_ms,
            })?;
        }
        if !microtask.is_acq(&item) {
            log.push(SimAnswer {
                task: task.to_string(),
                worker: worker.clone(),
                item,
                answer,
                deviated,
            });
        }
    }
}

impl SimOutcome {
    pub fn report(&self) -> CampaignReport {
        self.platform.report(&self.campaign).expect("simulated campaigns are finalized")
    }

    /// Queued items across all tasks.
    pub fn expert_queue(&self) -> BTreeSet<EntryId> {
        self.tasks.iter().flat_map(|t| t.expert_queue.iter().cloned()).collect()
    }

    /// Disagreements between the lexicon and the planted truth, one line each.
    pub fn truth_diffs(&self) -> Vec<String> {
        let lex = &self.platform.lexicon;
        let mut diffs = Vec::new();
        for (item, planted) in &self.truth {
            let Some(concept) = lex.concept_of(item) else {
                diffs.push(format!("{item}: not linked to a concept"));
                continue;
            };
            let linked: BTreeSet<EntryId> = lex
                .entries_of(&self.target_language)
                .filter(|e| lex.concept_of(&e.id) == Some(concept))
                .map(|e| e.id.clone())
                .collect();
            let gap = lex.gap(concept, &self.target_language).is_some();
            let ok = match planted {
                Planted::Gap => gap && linked.is_empty(),
                Planted::Equivalent { target } => !gap && linked.len() == 1 && linked.contains(target),
                Planted::NewWord { lemma, .. } => {
                    !gap && linked.len() == 1
                        && linked.iter().all(|id| lex.entry(id).is_some_and(|e| &e.word == lemma))
                }
            };
            if !ok {
                diffs.push(format!("{item}: expected {planted:?}, gap={gap}, linked={linked:?}"));
            }
        }
        diffs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_workers_reproduce_truth() {
        let out = simulate(&SimConfig::default()).unwrap();
        assert!(out.truth_diffs().is_empty(), "{:?}", out.truth_diffs());
        assert!(out.expert_queue().is_empty());
        assert_eq!(out.tasks.len(), 3);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let config = SimConfig {
            accuracy: 0.8,
            reserve_accuracy: 0.8,
            entries: 40,
            ..SimConfig::default()
        };
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.platform, b.platform);
    }
}
