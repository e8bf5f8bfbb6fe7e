use serde::{Deserialize, Serialize};

use super::{CampaignError, Microtask, Response};
use crate::ids::WorkerId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqVerdict {
    pub worker: WorkerId,
    pub correct: usize,
    pub total: usize,
    pub passed: bool,
}

/// Passes iff correct/total reaches `pass_rate`. `responses` are the
/// worker's responses for the task.
pub fn acq_gate(
    task: &Microtask,
    worker: &WorkerId,
    responses: &[Response],
    pass_rate: f64,
) -> Result<AcqVerdict, CampaignError> {
    let mut correct = 0;
    for (id, acq) in &task.acq_items {
        let answer = responses
            .iter()
            .rev()
            .find(|r| r.item == *id && r.worker == *worker)
            .ok_or_else(|| CampaignError::AcqsUnanswered {
                worker: worker.clone(),
                task: task.task_id.clone(),
            })?;
        if acq.is_correct(&answer.answer) {
            correct += 1;
        }
    }
    let total = task.acq_items.len();
    let passed = total == 0 || correct as f64 >= pass_rate * total as f64 - 1e-9;
    Ok(AcqVerdict {
        worker: worker.clone(),
        correct,
        total,
        passed,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingOutcome {
    pub retained: Vec<Response>,
    pub excluded: Vec<Response>,
    pub median: Option<f64>,
}

/// Drops responses faster than `low_ratio` or slower than `high_ratio`
/// times the worker's median. Fewer than three responses are kept as is.
pub fn timing_filter(responses: &[Response], low_ratio: f64, high_ratio: f64) -> TimingOutcome {
    if responses.len() < 3 {
        return TimingOutcome {
            retained: responses.to_vec(),
            excluded: Vec::new(),
            median: None,
        };
    }
    let durations: Vec<f64> = responses.iter().map(|r| r.duration_seconds).collect();
    let m = median(&durations).expect("non-empty");
    let (retained, excluded) = responses
        .iter()
        .cloned()
        .partition(|r| !(r.duration_seconds < low_ratio * m || r.duration_seconds > high_ratio * m));
    TimingOutcome {
        retained,
        excluded,
        median: Some(m),
    }
}
