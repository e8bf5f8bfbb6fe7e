use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{consensus, Consensus, QueuedItem, WorkflowError};
use crate::agreement::{item_iaa_answers, AnswerCategory};
use crate::ids::{EntryId, WorkerId};
use crate::text::normalize_lemma;

pub const SHEET_COLUMNS: [&str; 6] = [
    "worker_id",
    "source_lemma",
    "source_gloss",
    "worker_answer",
    "row_kind",
    "expert_decision",
];

/// Target word named by the expert: an existing entry or a new one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryRef {
    Existing { id: EntryId },
    New { lemma: String, gloss: String },
}

impl EntryRef {
    pub fn existing(id: impl Into<EntryId>) -> Self {
        EntryRef::Existing { id: id.into() }
    }

    pub fn new_word(lemma: impl Into<String>, gloss: impl Into<String>) -> Self {
        EntryRef::New {
            lemma: lemma.into(),
            gloss: gloss.into(),
        }
    }

    fn encode(&self) -> String {
        match self {
            EntryRef::Existing { id } => id.to_string(),
            EntryRef::New { lemma, gloss } => format!("NEW:{lemma}|{gloss}"),
        }
    }

    fn decode(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("NEW:") {
            let (lemma, gloss) = rest.split_once('|').unwrap_or((rest, ""));
            let lemma = lemma.trim();
            return (!lemma.is_empty()).then(|| EntryRef::new_word(lemma, gloss.trim()));
        }
        (!text.is_empty()).then(|| EntryRef::existing(text))
    }

    /// Identity used when comparing outcomes: new words compare by lemma.
    fn identity(&self) -> EntryRef {
        match self {
            EntryRef::Existing { .. } => self.clone(),
            EntryRef::New { lemma, .. } => EntryRef::new_word(normalize_lemma(lemma), ""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertDecision {
    /// The worker's word is correct.
    ConfirmWord,
    /// The worker's word is wrong; this one is correct.
    CorrectWord { target: EntryRef },
    ConfirmGap,
    /// Not a gap; this word lexicalizes the concept.
    RejectGap { target: EntryRef },
    /// Resolution of a DontKnow response.
    ResolveGap,
    ResolveWord { target: EntryRef },
}

impl ExpertDecision {
    pub fn encode(&self) -> String {
        match self {
            ExpertDecision::ConfirmWord => "CONFIRM_WORD".into(),
            ExpertDecision::CorrectWord { target } => format!("CORRECT_WORD:{}", target.encode()),
            ExpertDecision::ConfirmGap => "CONFIRM_GAP".into(),
            ExpertDecision::RejectGap { target } => format!("REJECT_GAP:{}", target.encode()),
            ExpertDecision::ResolveGap => "RESOLVE_GAP".into(),
            ExpertDecision::ResolveWord { target } => format!("RESOLVE_WORD:{}", target.encode()),
        }
    }

    /// `Ok(None)` for an empty cell.
    pub fn decode(text: &str) -> Result<Option<Self>, String> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(None);
        }
        let (head, arg) = match text.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a)),
            None => (text, None),
        };
        let target = || {
            arg.and_then(EntryRef::decode)
                .ok_or_else(|| format!("decision {head} needs a target"))
        };
        let decision = match head {
            "CONFIRM_WORD" => ExpertDecision::ConfirmWord,
            "CONFIRM_GAP" => ExpertDecision::ConfirmGap,
            "RESOLVE_GAP" => ExpertDecision::ResolveGap,
            "CORRECT_WORD" => ExpertDecision::CorrectWord { target: target()? },
            "REJECT_GAP" => ExpertDecision::RejectGap { target: target()? },
            "RESOLVE_WORD" => ExpertDecision::ResolveWord { target: target()? },
            other => return Err(format!("unknown decision {other:?}")),
        };
        if arg.is_some()
            && matches!(
                decision,
                ExpertDecision::ConfirmWord | ExpertDecision::ConfirmGap | ExpertDecision::ResolveGap
            )
        {
            return Err(format!("decision {head} takes no target"));
        }
        Ok(Some(decision))
    }
}

impl fmt::Display for ExpertDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Disputed,
    Dontknow,
    Sanity,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Disputed => "disputed",
            RowKind::Dontknow => "dontknow",
            RowKind::Sanity => "sanity",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "disputed" => Some(RowKind::Disputed),
            "dontknow" => Some(RowKind::Dontknow),
            "sanity" => Some(RowKind::Sanity),
            _ => None,
        }
    }
}

/// Source item as displayed on the sheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetItem {
    pub item: EntryId,
    pub lemma: String,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSheetRow {
    pub item: EntryId,
    pub worker_id: WorkerId,
    pub source_lemma: String,
    pub source_gloss: String,
    pub worker_answer: AnswerCategory,
    pub row_kind: RowKind,
    pub expert_decision: Option<ExpertDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSheet {
    pub rows: Vec<ExpertSheetRow>,
    /// Set when fewer unanimous items existed than sanity rows requested.
    pub warning: Option<String>,
}

/// Builds the sheet for `queue`. Sanity rows are sampled from `accepted`,
/// the items of the accepted run that reached 100% agreement.
pub fn export_expert_sheet(
    queue: &[QueuedItem],
    accepted: &[(EntryId, Vec<(WorkerId, AnswerCategory)>)],
    items: &BTreeMap<EntryId, SheetItem>,
    sanity_rate: f64,
    seed: u64,
) -> Result<ExpertSheet, WorkflowError> {
    if !(0.0..=1.0).contains(&sanity_rate) {
        return Err(WorkflowError::InvalidSanityRate(sanity_rate));
    }
    let describe = |id: &EntryId| {
        items.get(id).ok_or_else(|| WorkflowError::MalformedSheet {
            line: 0,
            reason: format!("no source entry {id}"),
        })
    };
    let mut rows = Vec::new();
    for q in queue {
        let source = describe(&q.item)?;
        for (worker, answer) in &q.responses {
            let row_kind = if *answer == AnswerCategory::DontKnow {
                RowKind::Dontknow
            } else {
                RowKind::Disputed
            };
            rows.push(ExpertSheetRow {
                item: q.item.clone(),
                worker_id: worker.clone(),
                source_lemma: source.lemma.clone(),
                source_gloss: source.gloss.clone(),
                worker_answer: answer.clone(),
                row_kind,
                expert_decision: None,
            });
        }
    }

    let queued: BTreeSet<&EntryId> = queue.iter().map(|q| &q.item).collect();
    let pool: Vec<&(EntryId, Vec<(WorkerId, AnswerCategory)>)> = accepted
        .iter()
        .filter(|(item, responses)| {
            !queued.contains(item)
                && !responses.is_empty()
                && responses.iter().all(|(_, a)| *a != AnswerCategory::DontKnow)
                && item_iaa_answers(&responses.iter().map(|(_, a)| a.clone()).collect::<Vec<_>>())
                    .is_ok_and(|(iaa, _)| iaa >= 100.0)
        })
        .collect();
    let wanted = (sanity_rate * queue.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut warning = None;
    let take = if wanted > pool.len() {
        warning = Some(format!(
            "not enough unanimous items: {wanted} sanity rows requested, {} available",
            pool.len()
        ));
        pool.len()
    } else {
        wanted
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), take).into_vec();
    picked.sort_unstable();
    for i in picked {
        let (item, responses) = pool[i];
        let source = describe(item)?;
        let (worker, answer) = &responses[0];
        rows.push(ExpertSheetRow {
            item: item.clone(),
            worker_id: worker.clone(),
            source_lemma: source.lemma.clone(),
            source_gloss: source.gloss.clone(),
            worker_answer: answer.clone(),
            row_kind: RowKind::Sanity,
            expert_decision: None,
        });
    }
    Ok(ExpertSheet { rows, warning })
}

pub fn sheet_to_csv(rows: &[ExpertSheetRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(SHEET_COLUMNS).expect("in-memory write");
    for r in rows {
        let decision = r.expert_decision.as_ref().map(ExpertDecision::encode).unwrap_or_default();
        writer
            .write_record([
                r.worker_id.as_str(),
                &r.source_lemma,
                &r.source_gloss,
                &r.worker_answer.encode(),
                r.row_kind.as_str(),
                &decision,
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Parses a completed sheet. `resolve(lemma, gloss)` maps the source
/// columns back to the source entry.
pub fn parse_expert_sheet(
    text: &str,
    resolve: &dyn Fn(&str, &str) -> Option<EntryId>,
) -> Result<Vec<ExpertSheetRow>, WorkflowError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| WorkflowError::MalformedSheet { line: 1, reason: e.to_string() })?
        .clone();
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != SHEET_COLUMNS {
        return Err(WorkflowError::MalformedSheet {
            line: 1,
            reason: format!("expected columns {}", SHEET_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| WorkflowError::MalformedSheet { line, reason };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() < 5 || record.len() > 6 {
            return Err(bad(format!("expected 6 fields, found {}", record.len())));
        }
        let lemma = record[1].trim();
        let gloss = record[2].trim();
        let item = resolve(lemma, gloss).ok_or_else(|| bad(format!("unknown source entry {lemma:?}")))?;
        let worker_answer = AnswerCategory::decode(&record[3]).map_err(|e| bad(e.to_string()))?;
        let row_kind = RowKind::parse(&record[4]).ok_or_else(|| bad(format!("bad row kind {:?}", &record[4])))?;
        let expert_decision = ExpertDecision::decode(record.get(5).unwrap_or("")).map_err(bad)?;
        rows.push(ExpertSheetRow {
            item,
            worker_id: WorkerId::new(record[0].trim()),
            source_lemma: lemma.to_string(),
            source_gloss: gloss.to_string(),
            worker_answer,
            row_kind,
            expert_decision,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalOutcome {
    Gap,
    Equivalent { targets: BTreeSet<EntryRef> },
}

impl FinalOutcome {
    /// Outcome implied by a crowd answer; `None` for DontKnow.
    pub fn from_answer(answer: &AnswerCategory) -> Option<Self> {
        match answer {
            AnswerCategory::Gap => Some(FinalOutcome::Gap),
            AnswerCategory::Equivalent { targets } => Some(FinalOutcome::Equivalent {
                targets: targets.iter().cloned().map(EntryRef::existing).collect(),
            }),
            AnswerCategory::NewWord { lemma, gloss } => Some(FinalOutcome::Equivalent {
                targets: [EntryRef::new_word(lemma.clone(), gloss.clone())].into(),
            }),
            AnswerCategory::DontKnow => None,
        }
    }

    fn identity(&self) -> (bool, BTreeSet<EntryRef>) {
        match self {
            FinalOutcome::Gap => (true, BTreeSet::new()),
            FinalOutcome::Equivalent { targets } => (false, targets.iter().map(EntryRef::identity).collect()),
        }
    }

    pub fn same_as(&self, other: &FinalOutcome) -> bool {
        self.identity() == other.identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordProvenance {
    Crowd,
    ExpertCorrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub item: EntryId,
    pub outcome: FinalOutcome,
    pub provenance: RecordProvenance,
}

enum RowVerdict {
    Gap,
    Word(Vec<EntryRef>),
}

fn row_verdict(row_no: usize, row: &ExpertSheetRow, decision: &ExpertDecision) -> Result<RowVerdict, WorkflowError> {
    let invalid = || WorkflowError::InvalidDecision {
        row: row_no,
        decision: decision.encode(),
        answer: row.worker_answer.encode(),
    };
    Ok(match decision {
        ExpertDecision::ConfirmWord => match FinalOutcome::from_answer(&row.worker_answer) {
            Some(FinalOutcome::Equivalent { targets }) => RowVerdict::Word(targets.into_iter().collect()),
            _ => return Err(invalid()),
        },
        ExpertDecision::ConfirmGap | ExpertDecision::ResolveGap => RowVerdict::Gap,
        ExpertDecision::CorrectWord { target }
        | ExpertDecision::RejectGap { target }
        | ExpertDecision::ResolveWord { target } => RowVerdict::Word(vec![target.clone()]),
    })
}

/// Final records for every item on the sheet, in first-appearance order.
/// Rows are numbered from 1 in errors. Sanity rows are ignored.
pub fn apply_expert_decisions(rows: &[ExpertSheetRow]) -> Result<Vec<FinalRecord>, WorkflowError> {
    let mut order: Vec<EntryId> = Vec::new();
    let mut per_item: BTreeMap<EntryId, (Vec<AnswerCategory>, Vec<RowVerdict>)> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        if row.row_kind == RowKind::Sanity {
            continue;
        }
        let decision = row
            .expert_decision
            .as_ref()
            .ok_or(WorkflowError::MissingDecision { row: i + 1 })?;
        let verdict = row_verdict(i + 1, row, decision)?;
        let slot = per_item.entry(row.item.clone()).or_insert_with(|| {
            order.push(row.item.clone());
            (Vec::new(), Vec::new())
        });
        slot.0.push(row.worker_answer.clone());
        slot.1.push(verdict);
    }

    let mut records = Vec::with_capacity(order.len());
    for item in order {
        let (answers, verdicts) = per_item.remove(&item).expect("recorded above");
        let gaps = verdicts.iter().filter(|v| matches!(v, RowVerdict::Gap)).count();
        let outcome = if gaps == verdicts.len() {
            FinalOutcome::Gap
        } else if gaps == 0 {
            let mut seen = BTreeSet::new();
            let mut targets = BTreeSet::new();
            for v in verdicts {
                if let RowVerdict::Word(refs) = v {
                    for r in refs {
                        if seen.insert(r.identity()) {
                            targets.insert(r);
                        }
                    }
                }
            }
            FinalOutcome::Equivalent { targets }
        } else {
            return Err(WorkflowError::ConflictingDecisions(item));
        };
        let crowd = match consensus(&answers) {
            Ok(Consensus::Agreed(answer)) => FinalOutcome::from_answer(&answer),
            _ => None,
        };
        let provenance = match crowd {
            Some(c) if c.same_as(&outcome) => RecordProvenance::Crowd,
            _ => RecordProvenance::ExpertCorrected,
        };
        records.push(FinalRecord {
            item,
            outcome,
            provenance,
        });
    }
    Ok(records)
}
