use lexgap_core::campaign::{CampaignConfig, CampaignError, Prompt, SessionInput, SessionStep};
use lexgap_core::ids::{CampaignId, EntryId, LanguageCode, WorkerId};
use lexgap_core::platform::{Command, CommandOutput, ErrorClass, Lifecycle, Platform, PlatformError, TaskPhase};
use lexgap_core::workflow::{WorkerRole, WorkerStatus};

fn lang(s: &str) -> LanguageCode {
    LanguageCode::new(s).unwrap()
}

fn w(s: &str) -> WorkerId {
    WorkerId::new(s)
}

fn config() -> CampaignConfig {
    let mut c = CampaignConfig::new(lang("eng"), lang("arb"), "food");
    c.questions_per_task = 4;
    c.acqs_per_task = 1;
    c
}

/// A campaign with one 4-question task and one ACQ whose answer is GAP.
fn setup(p: &mut Platform) -> (CampaignId, String) {
    let CommandOutput::CampaignCreated { campaign } = p
        .apply(&Command::CreateCampaign {
            description: "food".into(),
            date: "2024-03-01".into(),
            config: config(),
        })
        .unwrap()
    else {
        panic!()
    };
    let cmds = [
        Command::UploadSource {
            campaign: campaign.clone(),
            csv: "word,gloss\ncider,fermented apple drink\nbanana,long yellow fruit\nkibbeh,bulgur dish\npudding,sweet dessert\n".into(),
        },
        Command::UploadTarget {
            campaign: campaign.clone(),
            csv: "word,gloss\nموز,فاكهة طويلة\nكبة,طبق برغل\n".into(),
        },
        Command::UploadAcqBank {
            campaign: campaign.clone(),
            csv: "word,gloss,expected_answer\nsnowball,a ball of snow,GAP\n".into(),
        },
    ];
    for c in &cmds {
        p.apply(c).unwrap();
    }
    for (id, role) in [
        ("w1", WorkerRole::Qualified),
        ("w2", WorkerRole::Qualified),
        ("w3", WorkerRole::Qualified),
        ("r1", WorkerRole::Qualified),
        ("exp", WorkerRole::Expert),
    ] {
        p.apply(&Command::RegisterWorker {
            worker: w(id),
            role,
        })
        .unwrap();
    }
    let CommandOutput::TasksGenerated { tasks } = p.apply(&Command::GenerateTasks { campaign: campaign.clone() }).unwrap()
    else {
        panic!()
    };
    assert_eq!(tasks, vec!["t1".to_string()]);
    (campaign, tasks[0].clone())
}

fn start(p: &mut Platform, campaign: &CampaignId, task: &str, worker: &str) -> String {
    let CommandOutput::SessionStarted { session } = p
        .apply(&Command::StartSession {
            campaign: campaign.clone(),
            task: task.into(),
            worker: w(worker),
            at_ms: 0,
        })
        .unwrap()
    else {
        panic!()
    };
    session
}

/// Answers every item with Gap (the ACQ is answered correctly too).
fn answer_all_gap(p: &mut Platform, session: &str, mut t: u64) {
    p.apply(&Command::Consent {
        session: session.into(),
        accept: true,
        at_ms: t,
    })
    .unwrap();
    while let Prompt::Step1 { item, .. } = p.next_prompt(session).unwrap() {
        t += 30_000;
        p.apply(&Command::SubmitAnswer {
            session: session.into(),
            item,
            step: SessionStep::Step1,
            input: SessionInput::No,
            at_ms: t,
        })
        .unwrap();
    }
}

#[test]
fn unanimous_task_resolves_without_expert() {
    let mut p = Platform::new();
    let (c, t) = setup(&mut p);
    p.apply(&Command::AssignTask {
        campaign: c.clone(),
        task: t.clone(),
        group: vec![w("w1"), w("w2"), w("w3")],
    })
    .unwrap();
    for worker in ["w1", "w2", "w3"] {
        let s = start(&mut p, &c, &t, worker);
        answer_all_gap(&mut p, &s, 0);
        assert_eq!(p.next_prompt(&s).unwrap(), Prompt::Done);
    }
    let out = p
        .apply(&Command::StartValidation {
            campaign: c.clone(),
            task: t.clone(),
            reserve: vec![w("r1")],
            expert: w("exp"),
        })
        .unwrap();
    assert_eq!(out, CommandOutput::TaskPhase { phase: "resolved".into() });
    assert_eq!(p.report(&c).unwrap_err(), PlatformError::Campaign(CampaignError::NotFinal));
    p.apply(&Command::CloseCampaign { campaign: c.clone() }).unwrap();
    p.apply(&Command::FinalizeCampaign { campaign: c.clone() }).unwrap();
    let report = p.report(&c).unwrap();
    assert_eq!((report.total_gaps, report.total_words), (4, 0));
    assert_eq!(p.lexicon.gaps().count(), 4);
    // ACQ items never reach the report or the lexicon
    assert!(p.lexicon.entries().all(|e| e.word != "snowball"));
}

#[test]
fn failed_commands_leave_state_untouched() {
    let mut p = Platform::new();
    let (c, t) = setup(&mut p);
    let before = p.clone();
    let bad = [
        Command::AssignTask {
            campaign: c.clone(),
            task: t.clone(),
            group: vec![w("nobody")],
        },
        Command::AssignTask {
            campaign: c.clone(),
            task: "t9".into(),
            group: vec![w("w1")],
        },
        Command::StartValidation {
            campaign: c.clone(),
            task: t.clone(),
            reserve: vec![w("r1")],
            expert: w("w1"),
        },
        Command::FinalizeCampaign { campaign: c.clone() },
        Command::UploadSource {
            campaign: c.clone(),
            csv: "word,gloss\nx,y\n".into(),
        },
        Command::CreateReverseCampaign {
            from: c.clone(),
            description: "back".into(),
            date: "2024-04-01".into(),
            config: CampaignConfig::new(lang("arb"), lang("eng"), "food"),
        },
    ];
    let classes: Vec<ErrorClass> = bad.iter().map(|cmd| p.apply(cmd).unwrap_err().class()).collect();
    assert_eq!(
        classes,
        vec![
            ErrorClass::NotFound,
            ErrorClass::NotFound,
            ErrorClass::BadRequest,
            ErrorClass::Conflict,
            ErrorClass::Conflict,
            ErrorClass::Conflict,
        ]
    );
    assert_eq!(p, before);
}

#[test]
fn session_rules_surface_as_errors() {
    let mut p = Platform::new();
    let (c, t) = setup(&mut p);
    p.apply(&Command::AssignTask {
        campaign: c.clone(),
        task: t.clone(),
        group: vec![w("w1"), w("w2")],
    })
    .unwrap();
    let s = start(&mut p, &c, &t, "w1");
    assert_eq!(start(&mut p, &c, &t, "w1"), s);
    assert_eq!(
        p.next_prompt(&s).unwrap_err(),
        PlatformError::Campaign(CampaignError::NotConsented)
    );
    p.apply(&Command::Consent {
        session: s.clone(),
        accept: true,
        at_ms: 0,
    })
    .unwrap();
    let Prompt::Step1 { item, .. } = p.next_prompt(&s).unwrap() else {
        panic!()
    };
    let submit = |step, input| Command::SubmitAnswer {
        session: s.clone(),
        item: item.clone(),
        step,
        input,
        at_ms: 5_000,
    };
    p.apply(&submit(SessionStep::Step1, SessionInput::Yes)).unwrap();
    let empty = p
        .apply(&submit(SessionStep::Step2, SessionInput::Select { targets: vec![] }))
        .unwrap_err();
    assert_eq!(empty.class(), ErrorClass::BadRequest);
    let wrong = p.apply(&submit(SessionStep::Step1, SessionInput::No)).unwrap_err();
    assert_eq!(wrong.class(), ErrorClass::Conflict);
    // a declined consent closes the other session and counts as finished
    let s2 = start(&mut p, &c, &t, "w2");
    p.apply(&Command::Consent {
        session: s2.clone(),
        accept: false,
        at_ms: 0,
    })
    .unwrap();
    assert_eq!(p.next_prompt(&s2).unwrap_err(), PlatformError::Campaign(CampaignError::SessionDone));
    p.apply(&Command::CloseCampaign { campaign: c.clone() }).unwrap();
    assert_eq!(
        p.apply(&submit(SessionStep::Step2, SessionInput::NotInList)).unwrap_err(),
        PlatformError::TaskClosed
    );
    assert_eq!(PlatformError::TaskClosed.class(), ErrorClass::Gone);
}

#[test]
fn crowd_filter_isolates_the_deviating_worker() {
    let mut p = Platform::new();
    let (c, t) = setup(&mut p);
    p.apply(&Command::AssignTask {
        campaign: c.clone(),
        task: t.clone(),
        group: vec![w("w1"), w("w2"), w("w3")],
    })
    .unwrap();
    let banana = EntryId::new("eng-2");
    let muz = p
        .lexicon
        .find_entry(&lang("arb"), "موز", "فاكهة طويلة")
        .unwrap()
        .clone();
    let answer = |p: &mut Platform, worker: &str, yes_banana: bool| {
        let s = start(p, &c, &t, worker);
        p.apply(&Command::Consent {
            session: s.clone(),
            accept: true,
            at_ms: 0,
        })
        .unwrap();
        let mut now = 0;
        while let Prompt::Step1 { item, .. } = p.next_prompt(&s).unwrap() {
            now += 30_000;
            let mut inputs = vec![(SessionStep::Step1, SessionInput::No)];
            if item == banana && yes_banana {
                inputs = vec![
                    (SessionStep::Step1, SessionInput::Yes),
                    (SessionStep::Step2, SessionInput::Select { targets: vec![muz.clone()] }),
                ];
            } else if item != banana && !item.as_str().starts_with("acq") && !yes_banana {
                inputs = vec![(SessionStep::Step1, SessionInput::DontKnow)];
            }
            for (step, input) in inputs {
                p.apply(&Command::SubmitAnswer {
                    session: s.clone(),
                    item: item.clone(),
                    step,
                    input,
                    at_ms: now,
                })
                .unwrap();
            }
        }
    };
    let lemma_of_banana = p.lexicon.entry(&banana).unwrap().word.clone();
    assert_eq!(lemma_of_banana, "banana");
    answer(&mut p, "w1", true);
    answer(&mut p, "w2", true);
    answer(&mut p, "w3", false);
    p.apply(&Command::StartCrowdFilter {
        campaign: c.clone(),
        task: t.clone(),
        expert: w("exp"),
    })
    .unwrap();
    // the expert answers once; later subsets reuse the stored answers
    answer(&mut p, "exp", true);
    let state = p.campaign(&c).unwrap();
    let TaskPhase::Qualified { outcome } = &state.tasks[0].phase else {
        panic!("{:?}", state.tasks[0].phase.name())
    };
    assert_eq!(outcome.low_quality.iter().collect::<Vec<_>>(), vec![&w("w3")]);
    assert_eq!(p.workers[&w("w3")].status, WorkerStatus::LowQuality);
    assert_eq!(p.workers[&w("w1")].status, WorkerStatus::Active);
}

#[test]
fn reverse_campaign_needs_a_finalized_direction() {
    let mut p = Platform::new();
    let (c, t) = setup(&mut p);
    p.apply(&Command::AssignTask {
        campaign: c.clone(),
        task: t.clone(),
        group: vec![w("w1"), w("w2")],
    })
    .unwrap();
    for worker in ["w1", "w2"] {
        let s = start(&mut p, &c, &t, worker);
        answer_all_gap(&mut p, &s, 0);
    }
    p.apply(&Command::StartValidation {
        campaign: c.clone(),
        task: t.clone(),
        reserve: vec![w("r1")],
        expert: w("exp"),
    })
    .unwrap();
    p.apply(&Command::CloseCampaign { campaign: c.clone() }).unwrap();
    let reverse = Command::CreateReverseCampaign {
        from: c.clone(),
        description: "back".into(),
        date: "2024-04-01".into(),
        config: CampaignConfig::new(lang("arb"), lang("eng"), "food"),
    };
    assert_eq!(
        p.apply(&reverse).unwrap_err(),
        PlatformError::Campaign(CampaignError::Direction1NotFinal)
    );
    p.apply(&Command::FinalizeCampaign { campaign: c.clone() }).unwrap();
    let CommandOutput::CampaignCreated { campaign: back } = p.apply(&reverse).unwrap() else {
        panic!()
    };
    let state = p.campaign(&back).unwrap();
    assert_eq!(state.lifecycle, Lifecycle::Draft);
    // nothing was matched, so every target entry is a reverse source
    assert_eq!(state.source.len(), 2);
    assert_eq!(state.target, p.campaign(&c).unwrap().source);
}

#[test]
fn platform_state_round_trips_through_json() {
    let mut p = Platform::new();
    let (c, t) = setup(&mut p);
    p.apply(&Command::AssignTask {
        campaign: c.clone(),
        task: t.clone(),
        group: vec![w("w1"), w("w2")],
    })
    .unwrap();
    let s = start(&mut p, &c, &t, "w1");
    answer_all_gap(&mut p, &s, 0);
    let text = serde_json::to_string(&p).unwrap();
    let back: Platform = serde_json::from_str(&text).unwrap();
    assert_eq!(back, p);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}
