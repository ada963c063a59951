use std::collections::HashSet;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use studybench_core::domain::{Survey, SurveyForm};
use studybench_core::sim::{random_survey, synthetic_study};
use studybench_core::{
    seed, ImageId, PresentationId, SessionId, SessionState, StudyConfig, WorkerId,
};
use studybench_service::*;

fn survey() -> Survey {
    random_survey(&mut seed::rng(1))
}

fn service_with_clock(clock: Arc<ManualClock>) -> Service {
    let (materials, _) = synthetic_study(120, 5, 7, 0, 11);
    Service::builder(StudyConfig::default(), materials)
        .seed(5)
        .clock(clock)
        .build()
        .unwrap()
}

fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(
        Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap(),
    ))
}

fn service() -> Service {
    service_with_clock(clock())
}

fn begin(svc: &Service, worker: &str) -> (SessionId, PresentationView) {
    match svc.begin_session(&WorkerId::new(worker), 0.9).unwrap() {
        BeginResponse::Created {
            session_id,
            state,
            next: NextView::Present(p),
            ..
        } => {
            assert_eq!(state, SessionState::Training);
            (session_id, p)
        }
        other => panic!("expected a session, got {other:?}"),
    }
}

/// Rates every presentation at mid-slider, returning the acks.
fn rate_all(svc: &Service, id: &SessionId, first: PresentationView) -> Vec<RatingAck> {
    let mut acks = Vec::new();
    let mut current = first;
    loop {
        let ack = svc.submit_rating(id, current.presentation_id, 0.5).unwrap();
        acks.push(ack.clone());
        match ack.next {
            NextView::Present(p) => current = p,
            NextView::SurveyDue => return acks,
            NextView::Closed { state } => panic!("closed early in {state}"),
        }
    }
}

#[test]
fn intake_gate() {
    let svc = service();
    begin(&svc, "w1");
    assert_eq!(
        svc.begin_session(&WorkerId::new("w1"), 0.9).unwrap(),
        BeginResponse::Blocked {
            reason: BlockReason::RepeatWorker
        }
    );
    assert_eq!(
        svc.begin_session(&WorkerId::new("w2"), 0.75).unwrap(),
        BeginResponse::Blocked {
            reason: BlockReason::LowConfidence
        }
    );
    // a low-confidence block does not use up the worker
    begin(&svc, "w2");
    assert!(matches!(
        svc.begin_session(&WorkerId::new("w3"), 1.5),
        Err(ServiceError::InvalidConfidence(_))
    ));
    assert!(matches!(
        svc.begin_session(&WorkerId::new(" "), 0.9),
        Err(ServiceError::EmptyWorkerId)
    ));
}

#[test]
fn full_session_walk() {
    let svc = service();
    let (id, first) = begin(&svc, "w1");
    assert_eq!(first.position, 1);
    assert_eq!(first.total, 55);
    assert_eq!(first.phase, Phase::Training);

    let acks = rate_all(&svc, &id, first);
    assert_eq!(acks.len(), 55);
    let done: Vec<usize> = acks
        .iter()
        .enumerate()
        .filter(|(_, a)| matches!(&a.next, NextView::Present(p) if p.training_done))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(done, vec![6], "training_done emitted once, after rating 7");
    assert!(acks[..6].iter().all(|a| a.state == SessionState::Training));
    assert!(acks[6..54].iter().all(|a| a.state == SessionState::Testing));
    assert_eq!(acks[54].state, SessionState::Survey);
    assert_eq!(svc.next(&id).unwrap(), NextView::SurveyDue);

    let mut partial = SurveyForm::from(&survey());
    partial.device_class = None;
    match svc.submit_survey(&id, &partial) {
        Err(ServiceError::IncompleteSurvey(f)) => assert_eq!(f, vec!["device_class"]),
        other => panic!("{other:?}"),
    }

    let ack = svc
        .submit_survey(&id, &SurveyForm::from(&survey()))
        .unwrap();
    assert_eq!(ack.state, SessionState::Complete);
    assert!(matches!(
        svc.submit_survey(&id, &SurveyForm::from(&survey())),
        Err(ServiceError::AlreadyComplete)
    ));
    assert_eq!(
        svc.next(&id).unwrap(),
        NextView::Closed {
            state: SessionState::Complete
        }
    );

    let snap = svc.export().unwrap();
    let session = &snap.sessions[0];
    assert_eq!(session.ratings.len(), 55);
    assert!(session.ratings.iter().all(|r| r.score == 51));
    assert!(session.survey.is_some() && session.finished_at.is_some());
    // 38 distinct database images counted once each; gold and training not
    assert_eq!(snap.coverage.len(), 38);
    assert!(snap.coverage.values().all(|&n| n == 1));
    assert!(snap.coverage.keys().all(|k| k.as_str().starts_with("img")));
}

#[test]
fn rating_idempotency_and_ordering() {
    let svc = service();
    let (id, first) = begin(&svc, "w1");
    let a1 = svc.submit_rating(&id, first.presentation_id, 0.3).unwrap();
    let NextView::Present(second) = &a1.next else {
        panic!()
    };
    assert_eq!(second.position, 2);

    // identical replay, no duplicate rating
    let again = svc.submit_rating(&id, first.presentation_id, 0.3).unwrap();
    assert_eq!(again, a1);
    assert!(matches!(
        svc.submit_rating(&id, first.presentation_id, 0.4),
        Err(ServiceError::ConflictingDuplicate(_))
    ));
    assert!(matches!(
        svc.submit_rating(&id, PresentationId(5), 0.4),
        Err(ServiceError::OutOfOrder { .. })
    ));
    assert!(matches!(
        svc.submit_rating(&id, PresentationId(999), 0.4),
        Err(ServiceError::UnknownPresentation(_))
    ));
    assert!(matches!(
        svc.submit_rating(&id, second.presentation_id, 1.01),
        Err(ServiceError::InvalidPosition(_))
    ));
    assert!(matches!(
        svc.submit_rating(&SessionId::new("nope"), PresentationId(1), 0.5),
        Err(ServiceError::NotFound(_))
    ));
    assert!(matches!(
        svc.submit_survey(&id, &SurveyForm::from(&survey())),
        Err(ServiceError::WrongState { .. })
    ));
    assert_eq!(svc.session(&id).unwrap().rated, 1);

    let rest = rate_all(&svc, &id, second.clone());
    let last = rest.last().unwrap().clone();
    // in survey state, a new rating is a wrong-state error, but replaying
    // the last one still returns its ack
    assert!(matches!(
        svc.submit_rating(&id, PresentationId(1), 0.9),
        Err(ServiceError::ConflictingDuplicate(_))
    ));
    assert_eq!(
        svc.submit_rating(&id, PresentationId(55), 0.5).unwrap(),
        last
    );
    assert_eq!(svc.export().unwrap().sessions[0].ratings.len(), 55);
}

#[test]
fn wrong_state_in_every_non_rating_state() {
    let clock = clock();
    let svc = service_with_clock(clock.clone());
    // survey
    let (a, first) = begin(&svc, "a");
    rate_all(&svc, &a, first);
    // complete
    let (b, first) = begin(&svc, "b");
    rate_all(&svc, &b, first);
    svc.submit_survey(&b, &SurveyForm::from(&survey())).unwrap();
    for id in [&a, &b] {
        match svc.submit_rating(id, PresentationId(56), 0.5) {
            Err(e) => assert!(matches!(e, ServiceError::WrongState { .. }), "{e}"),
            Ok(_) => panic!("rating accepted outside training/testing"),
        }
    }
    // rejected by expiry
    let (c, _) = begin(&svc, "c");
    clock.advance(Duration::minutes(61));
    assert!(matches!(
        svc.submit_rating(&c, PresentationId(1), 0.5),
        Err(ServiceError::Expired)
    ));
}

#[test]
fn expiry_rejects_and_keeps_worker_out() {
    let clock = clock();
    let svc = service_with_clock(clock.clone());
    let (id, first) = begin(&svc, "slow");
    svc.submit_rating(&id, first.presentation_id, 0.2).unwrap();
    clock.advance(Duration::minutes(59));
    assert_eq!(svc.session(&id).unwrap().state, SessionState::Training);
    clock.advance(Duration::minutes(1));
    assert_eq!(svc.session(&id).unwrap().state, SessionState::Rejected);
    assert_eq!(
        svc.begin_session(&WorkerId::new("slow"), 0.9).unwrap(),
        BeginResponse::Blocked {
            reason: BlockReason::RepeatWorker
        }
    );
    let snap = svc.export().unwrap();
    assert!(snap.coverage.is_empty());
    assert_eq!(snap.complete_sessions().count(), 0);
}

#[test]
fn reservations_balance_concurrent_hits() {
    // three HITs in flight over a 120-image pool should not overlap on
    // database images while fresh images remain
    let svc = service();
    let mut seen: Vec<HashSet<ImageId>> = Vec::new();
    for w in ["a", "b", "c"] {
        begin(&svc, w);
    }
    let snap = svc.export().unwrap();
    for s in &snap.sessions {
        seen.push(
            s.plan
                .presentations
                .iter()
                .filter(|p| p.role.counts_for_mos())
                .map(|p| p.image_id.clone())
                .collect(),
        );
    }
    assert!(seen[0].is_disjoint(&seen[1]));
    assert!(seen[0].is_disjoint(&seen[2]));
    assert!(seen[1].is_disjoint(&seen[2]));
}

#[test]
fn concurrent_intake_admits_one_session_per_worker() {
    let svc = Arc::new(service());
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let svc = svc.clone();
            std::thread::spawn(move || svc.begin_session(&WorkerId::new("same"), 0.95).unwrap())
        })
        .collect();
    let created = handles
        .into_iter()
        .map(|h| h.join().unwrap())
        .filter(|r| matches!(r, BeginResponse::Created { .. }))
        .count();
    assert_eq!(created, 1);
    assert_eq!(svc.ledger().len(), 1);
}
