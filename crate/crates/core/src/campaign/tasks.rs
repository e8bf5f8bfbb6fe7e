use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CampaignConfig, CampaignError};
use crate::agreement::AnswerCategory;
use crate::ids::{EntryId, WorkerId};

/// An attention-check question with a known answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqItem {
    pub word: String,
    pub gloss: String,
    pub expected: AnswerCategory,
}

impl AcqItem {
    pub fn is_correct(&self, answer: &AnswerCategory) -> bool {
        answer.key().is_some() && answer.key() == self.expected.key()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microtask {
    pub task_id: String,
    /// Presentation order, ACQs included.
    pub items: Vec<EntryId>,
    pub acq_items: BTreeMap<EntryId, AcqItem>,
    pub group: Vec<WorkerId>,
}

impl Microtask {
    pub fn is_acq(&self, item: &EntryId) -> bool {
        self.acq_items.contains_key(item)
    }

    pub fn source_items(&self) -> impl Iterator<Item = &EntryId> {
        self.items.iter().filter(|i| !self.is_acq(i))
    }
}

/// Parses a `word,gloss,expected_answer` CSV. The expected answer is `GAP`,
/// an encoded answer (`EQ:..`, `NEW:..`) or a bare target word that
/// `resolve_word` maps to the matching target entries.
pub fn parse_acq_bank(
    text: &str,
    resolve_word: &dyn Fn(&str) -> Vec<EntryId>,
) -> Result<Vec<AcqItem>, CampaignError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CampaignError::BadAcqBank { line: 1, reason: e.to_string() })?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_lowercase()).collect();
    if names != ["word", "gloss", "expected_answer"] {
        return Err(CampaignError::BadAcqBank {
            line: 1,
            reason: "expected header word,gloss,expected_answer".into(),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| CampaignError::BadAcqBank { line, reason };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let word = record[0].trim();
        let gloss = record[1].trim();
        let raw = record[2].trim();
        if word.is_empty() {
            return Err(bad("empty word".into()));
        }
        let expected = match AnswerCategory::decode(raw) {
            Ok(AnswerCategory::DontKnow) => return Err(bad("expected answer cannot be DK".into())),
            Ok(a) => a,
            Err(_) => {
                let ids = resolve_word(raw);
                match ids.len() {
                    0 => return Err(bad(format!("no target entry {raw:?}"))),
                    1 => AnswerCategory::equivalent(ids),
                    n => return Err(bad(format!("{raw:?} matches {n} target entries; use EQ:<id>"))),
                }
            }
        };
        out.push(AcqItem {
            word: word.into(),
            gloss: gloss.into(),
            expected,
        });
    }
    Ok(out)
}

/// Partitions `source` into tasks of `questions_per_task` items and injects
/// ACQs at every 10th position. ACQs that do not fit go at the end.
pub fn generate_tasks(
    source: &[EntryId],
    bank: &[AcqItem],
    config: &CampaignConfig,
) -> Result<Vec<Microtask>, CampaignError> {
    config.validate()?;
    if source.is_empty() {
        return Err(CampaignError::EmptyDataset("source"));
    }
    let a = config.acqs_per_task;
    if bank.len() < a {
        return Err(CampaignError::AcqBankTooSmall {
            needed: a,
            available: bank.len(),
        });
    }
    let mut order = source.to_vec();
    if let Some(seed) = config.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }

    let mut tasks = Vec::new();
    for (t, chunk) in order.chunks(config.questions_per_task).enumerate() {
        let picks: Vec<usize> = (0..a).map(|j| (t * a + j) % bank.len()).collect();
        let mut acq_items = BTreeMap::new();
        let mut pending = Vec::new();
        for &b in &picks {
            let id = EntryId::new(format!("acq-{}", b + 1));
            acq_items.insert(id.clone(), bank[b].clone());
            pending.push(id);
        }
        pending.reverse();
        let mut items = Vec::with_capacity(chunk.len() + a);
        for id in chunk {
            if (items.len() + 1) % 10 == 0 {
                if let Some(acq) = pending.pop() {
                    items.push(acq);
                }
            }
            items.push(id.clone());
        }
        while let Some(acq) = pending.pop() {
            items.push(acq);
        }
        tasks.push(Microtask {
            task_id: format!("t{}", t + 1),
            items,
            acq_items,
            group: Vec::new(),
        });
    }
    Ok(tasks)
}
