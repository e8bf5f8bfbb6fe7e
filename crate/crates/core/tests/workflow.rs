use std::collections::BTreeSet;

use lexgap_core::agreement::{Alpha, AnswerCategory};
use lexgap_core::ids::{EntryId, WorkerId};
use lexgap_core::workflow::{
    binomial, filter_crowd, validate_responses, CrowdFilter, DataValidation, QueueReason, RunResponse, Step,
    TaskRun, WorkflowError,
};
use proptest::prelude::*;

fn ws(names: &[&str]) -> Vec<WorkerId> {
    names.iter().map(|n| WorkerId::new(*n)).collect()
}

/// `gaps` unanimous Gap items, `words` unanimous Equivalent items and
/// `splits` items where the last participant deviates from a Gap majority.
fn shaped_run(run_id: &str, participants: &[WorkerId], gaps: usize, words: usize, splits: usize) -> TaskRun {
    let eq = AnswerCategory::equivalent([EntryId::new("t1")]);
    let mut responses = Vec::new();
    let mut item = 0;
    let mut push = |answers: &dyn Fn(usize) -> AnswerCategory, count: usize, responses: &mut Vec<RunResponse>| {
        for _ in 0..count {
            for (i, w) in participants.iter().enumerate() {
                responses.push(RunResponse {
                    item: EntryId::new(format!("i{item}")),
                    worker: w.clone(),
                    answer: answers(i),
                    duration_seconds: 30.0,
                });
            }
            item += 1;
        }
    };
    let last = participants.len() - 1;
    push(&|_| AnswerCategory::Gap, gaps, &mut responses);
    push(&|_| eq.clone(), words, &mut responses);
    push(
        &|i| if i == last { eq.clone() } else { AnswerCategory::Gap },
        splits,
        &mut responses,
    );
    TaskRun {
        run_id: run_id.to_string(),
        participants: participants.to_vec(),
        responses,
    }
}

/// Independent alpha for complete data: 1 - (n-1) * sum_u D_u / sum_{c!=k} n_c n_k,
/// with D_u = sum_{c!=k} n_uc n_uk / (m_u - 1).
fn oracle_alpha(run: &TaskRun) -> f64 {
    use std::collections::BTreeMap;
    let mut per_item: BTreeMap<&EntryId, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &run.responses {
        *per_item.entry(&r.item).or_default().entry(r.answer.encode()).or_default() += 1.0;
    }
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    let mut disagreement = 0.0;
    let mut n = 0.0;
    for counts in per_item.values() {
        let m: f64 = counts.values().sum();
        let pairs: f64 = counts.values().map(|a| a * (m - a)).sum();
        disagreement += pairs / (m - 1.0);
        n += m;
        for (c, v) in counts {
            *totals.entry(c.clone()).or_default() += v;
        }
    }
    let expected: f64 = totals.values().map(|a| a * (n - a)).sum();
    1.0 - (n - 1.0) * disagreement / expected
}

#[test]
fn fixture_shapes_hit_target_alphas() {
    let p = ws(&["a", "b", "c"]);
    for ((g, w, s), want) in [((2, 2, 1), 0.75), ((1, 2, 2), 0.5), ((1, 4, 2), 0.59), ((4, 7, 1), 0.89), ((4, 2, 1), 0.80)] {
        let run = shaped_run("r", &p, g, w, s);
        let alpha = run.alpha().unwrap().value().unwrap();
        assert!((alpha - oracle_alpha(&run)).abs() < 1e-12);
        assert!((alpha - want).abs() < 0.005, "{alpha} vs {want}");
    }
}

#[test]
fn full_group_passes_in_one_run() {
    let group = ws(&["w1", "w2", "w3"]);
    let mut calls = 0;
    let mut runner = |p: &[WorkerId]| {
        calls += 1;
        Ok(shaped_run(&format!("r{calls}"), p, 2, 2, 1))
    };
    let out = filter_crowd(&group, &WorkerId::new("exp"), 0.70, &mut runner).unwrap();
    assert_eq!(out.high_quality, group.iter().cloned().collect());
    assert!(out.low_quality.is_empty());
    assert_eq!(out.runs_executed, vec!["r1"]);
    assert_eq!(out.passing_alpha, Some(Alpha::Value(0.75)));
}

#[test]
fn expert_with_two_workers_isolates_third() {
    let group = ws(&["w1", "w2", "w3"]);
    let expert = WorkerId::new("exp");
    let mut requested = Vec::new();
    let mut runner = |p: &[WorkerId]| {
        requested.push(p.to_vec());
        let id = format!("r{}", requested.len());
        if p == ws(&["exp", "w1", "w2"]).as_slice() {
            Ok(shaped_run(&id, p, 4, 2, 1))
        } else {
            Ok(shaped_run(&id, p, 1, 2, 2))
        }
    };
    let out = filter_crowd(&group, &expert, 0.70, &mut runner).unwrap();
    assert_eq!(out.low_quality, [WorkerId::new("w3")].into());
    assert_eq!(out.high_quality, ws(&["w1", "w2"]).into_iter().collect());
    assert_eq!(requested, vec![ws(&["w1", "w2", "w3"]), ws(&["exp", "w1", "w2"])]);
}

#[test]
fn crowd_filter_worst_case_run_count() {
    let group = ws(&["w1", "w2", "w3"]);
    let mut requested = Vec::new();
    let mut runner = |p: &[WorkerId]| {
        requested.push(p.to_vec());
        Ok(shaped_run(&format!("r{}", requested.len()), p, 1, 2, 2))
    };
    let out = filter_crowd(&group, &WorkerId::new("exp"), 0.70, &mut runner).unwrap();
    assert_eq!(out.runs_executed.len(), 1 + binomial(3, 2) + binomial(3, 1));
    assert_eq!(out.runs_executed.len(), 7);
    assert_eq!(out.low_quality, group.iter().cloned().collect());
    assert!(out.high_quality.is_empty());
    assert_eq!(
        requested,
        vec![
            ws(&["w1", "w2", "w3"]),
            ws(&["exp", "w1", "w2"]),
            ws(&["exp", "w1", "w3"]),
            ws(&["exp", "w2", "w3"]),
            ws(&["exp", "w1"]),
            ws(&["exp", "w2"]),
            ws(&["exp", "w3"]),
        ]
    );
}

#[test]
fn runner_failure_propagates() {
    let mut runner = |_: &[WorkerId]| Err(WorkflowError::RunnerFailure("worker offline".into()));
    assert!(matches!(
        filter_crowd(&ws(&["a", "b"]), &WorkerId::new("e"), 0.7, &mut runner),
        Err(WorkflowError::RunnerFailure(_))
    ));
}

#[test]
fn bad_inputs_rejected() {
    let e = WorkerId::new("e");
    assert!(matches!(
        CrowdFilter::start(ws(&["a"]), e.clone(), 0.7),
        Err(WorkflowError::InvalidGroup(_))
    ));
    assert!(matches!(
        CrowdFilter::start(ws(&["a", "b"]), e.clone(), 0.0),
        Err(WorkflowError::InvalidThreshold(_))
    ));
    assert!(matches!(
        CrowdFilter::start(ws(&["a", "e"]), e, 0.7),
        Err(WorkflowError::InvalidGroup(_))
    ));
}

#[test]
fn submitting_the_wrong_participants_is_rejected() {
    let (mut filter, step) = CrowdFilter::start(ws(&["a", "b", "c"]), WorkerId::new("e"), 0.7).unwrap();
    assert_eq!(step, Step::Run(ws(&["a", "b", "c"])));
    let err = filter.submit(shaped_run("x", &ws(&["a", "b"]), 1, 1, 0)).unwrap_err();
    assert!(matches!(err, WorkflowError::ParticipantMismatch { .. }));
    // order within the participant set does not matter
    let step = filter.submit(shaped_run("x", &ws(&["c", "a", "b"]), 2, 2, 1)).unwrap();
    assert!(matches!(step, Step::Done(_)));
    assert_eq!(
        filter.submit(shaped_run("y", &ws(&["a", "b", "c"]), 2, 2, 1)),
        Err(WorkflowError::AlreadyFinished)
    );
}

#[test]
fn validation_happy_path_queues_disputed_items() {
    let g1 = ws(&["w1", "w2", "w3"]);
    let original = shaped_run("orig", &g1, 4, 7, 1);
    let mut runner = |_: &[WorkerId]| -> Result<TaskRun, WorkflowError> { panic!("no re-run expected") };
    let out = validate_responses(&g1, original, &ws(&["w4", "w5", "w6"]), &WorkerId::new("exp"), 0.70, &mut runner)
        .unwrap();
    assert_eq!(out.classification.high_quality, g1.iter().cloned().collect());
    assert_eq!(out.accepted_run.as_deref(), Some("orig"));
    assert_eq!(out.expert_queue.len(), 1);
    assert_eq!(out.expert_queue[0].item, EntryId::new("i11"));
    assert_eq!(out.expert_queue[0].reason, QueueReason::Disagreement);
}

#[test]
fn validation_replaces_one_worker() {
    let g1 = ws(&["w1", "w2", "w3"]);
    let g2 = ws(&["w4", "w5", "w6"]);
    let original = shaped_run("orig", &g1, 1, 4, 2);
    assert!((original.alpha().unwrap().value().unwrap() - 0.59).abs() < 0.005);
    let mut requested = Vec::new();
    let mut runner = |p: &[WorkerId]| {
        requested.push(p.to_vec());
        Ok(shaped_run("rerun-1", p, 4, 7, 1))
    };
    let out = validate_responses(&g1, original, &g2, &WorkerId::new("exp"), 0.70, &mut runner).unwrap();
    assert_eq!(requested, vec![ws(&["w1", "w2", "w4"])]);
    assert_eq!(out.classification.low_quality, [WorkerId::new("w3")].into());
    assert_eq!(out.classification.high_quality, ws(&["w1", "w2"]).into_iter().collect());
    let recorded = out.history[1].alpha.unwrap().value().unwrap();
    assert!((recorded - 0.89).abs() < 0.005);
    assert_eq!(out.accepted_run.as_deref(), Some("rerun-1"));
}

#[test]
fn validation_terminal_branch_queues_original_answers() {
    let g1 = ws(&["w1", "w2", "w3"]);
    let g2 = ws(&["w4", "w5", "w6"]);
    let original = shaped_run("orig", &g1, 1, 2, 2);
    let mut requested = Vec::new();
    let mut runner = |p: &[WorkerId]| {
        requested.push(p.to_vec());
        Ok(shaped_run(&format!("r{}", requested.len()), p, 1, 2, 2))
    };
    let out = validate_responses(&g1, original.clone(), &g2, &WorkerId::new("exp"), 0.70, &mut runner).unwrap();
    let stages: usize = (1..=3).map(|k| binomial(3, 3 - k) * binomial(3, k)).sum();
    assert_eq!(requested.len(), stages);
    assert_eq!(requested.last().unwrap(), &g2);
    assert!(out.classification.high_quality.is_empty());
    assert_eq!(out.classification.low_quality, g1.iter().cloned().collect());
    assert_eq!(out.reserve_low_quality, g2.iter().cloned().collect());
    assert_eq!(out.accepted_run, None);
    assert_eq!(out.expert_queue.len(), 5);
    let queued: Vec<_> = out.expert_queue.iter().flat_map(|q| q.responses.clone()).collect();
    let original_answers: Vec<_> = original.responses.iter().map(|r| (r.worker.clone(), r.answer.clone())).collect();
    assert_eq!(queued, original_answers);
}

#[test]
fn validation_g2_alone_classifies_all_g1_low() {
    let g1 = ws(&["w1", "w2"]);
    let g2 = ws(&["w4", "w5"]);
    let mut runner = |p: &[WorkerId]| {
        if p == g2.as_slice() {
            Ok(shaped_run("g2", p, 3, 3, 0))
        } else {
            Ok(shaped_run("mixed", p, 1, 1, 3))
        }
    };
    let out = validate_responses(&g1, shaped_run("orig", &g1, 1, 1, 3), &g2, &WorkerId::new("exp"), 0.7, &mut runner)
        .unwrap();
    assert_eq!(out.classification.low_quality, g1.iter().cloned().collect());
    assert!(out.classification.high_quality.is_empty());
    assert_eq!(out.accepted_run.as_deref(), Some("g2"));
    assert!(out.expert_queue.is_empty());
}

#[test]
fn dont_know_items_always_queued() {
    let g1 = ws(&["w1", "w2", "w3"]);
    let mut run = shaped_run("orig", &g1, 5, 5, 0);
    run.responses[0].answer = AnswerCategory::DontKnow;
    let mut runner = |_: &[WorkerId]| -> Result<TaskRun, WorkflowError> { unreachable!() };
    let out = validate_responses(&g1, run, &ws(&["w4"]), &WorkerId::new("e"), 0.7, &mut runner).unwrap();
    assert_eq!(out.expert_queue.len(), 1);
    assert_eq!(out.expert_queue[0].reason, QueueReason::DontKnow);
}

#[test]
fn validation_rejects_expert_in_groups() {
    let g1 = ws(&["w1", "e"]);
    assert!(matches!(
        DataValidation::start(g1.clone(), ws(&["w3"]), &WorkerId::new("e"), 0.7, shaped_run("o", &g1, 1, 1, 0)),
        Err(WorkflowError::InvalidGroup(_))
    ));
}

fn arb_run(participants: Vec<WorkerId>) -> impl Strategy<Value = TaskRun> {
    let m = participants.len();
    prop::collection::vec(prop::collection::vec(0u8..3, m), 1..8).prop_map(move |items| {
        let mut responses = Vec::new();
        for (i, row) in items.iter().enumerate() {
            for (w, v) in participants.iter().zip(row) {
                let answer = match v {
                    0 => AnswerCategory::Gap,
                    1 => AnswerCategory::equivalent([EntryId::new("t")]),
                    _ => AnswerCategory::new_word("x", ""),
                };
                responses.push(RunResponse {
                    item: EntryId::new(format!("i{i}")),
                    worker: w.clone(),
                    answer,
                    duration_seconds: 1.0,
                });
            }
        }
        TaskRun {
            run_id: String::new(),
            participants: participants.clone(),
            responses,
        }
    })
}

proptest! {
    #[test]
    fn crowd_filter_partitions_and_terminates(n in 2usize..5, seed in any::<u64>(), threshold in 0.3f64..1.0) {
        let group: Vec<WorkerId> = (0..n).map(|i| WorkerId::new(format!("w{i}"))).collect();
        let expert = WorkerId::new("exp");
        let mut state = seed;
        let mut count = 0usize;
        let mut runner = |p: &[WorkerId]| {
            count += 1;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let v = (state >> 33) % 4;
            let run = shaped_run(&format!("r{count}"), p, 2, 2, v as usize);
            Ok(run)
        };
        let out = filter_crowd(&group, &expert, threshold, &mut runner).unwrap();
        let all: BTreeSet<WorkerId> = group.iter().cloned().collect();
        prop_assert!(out.high_quality.is_disjoint(&out.low_quality));
        prop_assert_eq!(out.high_quality.union(&out.low_quality).cloned().collect::<BTreeSet<_>>(), all);
        prop_assert!(!out.low_quality.contains(&expert));
        let bound = 1 + (1..n).map(|i| binomial(n, i)).sum::<usize>();
        prop_assert!(out.runs_executed.len() <= bound);
    }

    #[test]
    fn validation_partitions_and_is_reproducible(
        original in arb_run(ws(&["a", "b", "c"])),
        reruns in prop::collection::vec(arb_run(ws(&["p", "q", "r"])), 20),
        m in 1usize..4,
    ) {
        let g1 = ws(&["a", "b", "c"]);
        let g2: Vec<WorkerId> = ["x", "y", "z"][..m].iter().map(|s| WorkerId::new(*s)).collect();
        let run_once = || {
            let mut i = 0;
            let mut runner = |p: &[WorkerId]| {
                // relabel the canned responses onto the requested participants
                let mut run = reruns[i % reruns.len()].clone();
                for r in &mut run.responses {
                    let pos = ["p", "q", "r"].iter().position(|s| r.worker.as_str() == *s).unwrap();
                    r.worker = p[pos].clone();
                }
                run.participants = p.to_vec();
                run.run_id = format!("r{i}");
                i += 1;
                Ok(run)
            };
            validate_responses(&g1, original.clone(), &g2, &WorkerId::new("e"), 0.7, &mut runner).unwrap()
        };
        let out = run_once();
        prop_assert_eq!(&out, &run_once());
        let c = &out.classification;
        prop_assert!(c.high_quality.is_disjoint(&c.low_quality));
        prop_assert_eq!(c.high_quality.union(&c.low_quality).cloned().collect::<BTreeSet<_>>(), g1.iter().cloned().collect());
        let bound = 1 + (1..=m.min(3)).map(|k| binomial(3, 3 - k) * binomial(m, k)).sum::<usize>();
        prop_assert!(out.history.len() <= bound);
    }
}
