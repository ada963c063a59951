use std::io::Write;

use studybench_core::domain::SurveyForm;
use studybench_core::sim::{random_survey, synthetic_study};
use studybench_core::{seed, SessionState, StudyConfig, WorkerId};
use studybench_service::*;

fn open(path: &std::path::Path) -> Service {
    let (materials, _) = synthetic_study(120, 5, 7, 0, 11);
    Service::builder(StudyConfig::default(), materials)
        .seed(5)
        .journal(path, false)
        .build()
        .unwrap()
}

fn start(svc: &Service, worker: &str) -> (studybench_core::SessionId, PresentationView) {
    match svc.begin_session(&WorkerId::new(worker), 0.9).unwrap() {
        BeginResponse::Created {
            session_id,
            next: NextView::Present(p),
            ..
        } => (session_id, p),
        other => panic!("{other:?}"),
    }
}

#[test]
fn restart_preserves_sessions_ratings_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.jsonl");

    let before = {
        let svc = open(&path);
        // one complete, one mid-test, one just started
        let (a, mut p) = start(&svc, "a");
        while let NextView::Present(n) = svc.submit_rating(&a, p.presentation_id, 0.7).unwrap().next
        {
            p = n;
        }
        svc.submit_survey(&a, &SurveyForm::from(&random_survey(&mut seed::rng(2))))
            .unwrap();
        let (b, mut p) = start(&svc, "b");
        for _ in 0..20 {
            match svc.submit_rating(&b, p.presentation_id, 0.1).unwrap().next {
                NextView::Present(n) => p = n,
                _ => unreachable!(),
            }
        }
        start(&svc, "c");
        svc.export().unwrap()
        // dropped without any shutdown step: a crash
    };

    let svc = open(&path);
    let after = svc.export().unwrap();
    assert_eq!(after, before);
    for w in ["a", "b", "c"] {
        assert_eq!(
            svc.begin_session(&WorkerId::new(w), 0.9).unwrap(),
            BeginResponse::Blocked {
                reason: BlockReason::RepeatWorker
            }
        );
    }
    // b resumes exactly where it stopped
    let b = &after.sessions[1];
    assert_eq!(b.state, SessionState::Testing);
    match svc.next(&b.session_id).unwrap() {
        NextView::Present(p) => assert_eq!(p.position, 21),
        other => panic!("{other:?}"),
    }
    // new sessions continue the id sequence
    let (d, _) = start(&svc, "d");
    assert_eq!(d.as_str(), "sess-000003");
}

#[test]
fn torn_tail_is_discarded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.jsonl");
    let before = {
        let svc = open(&path);
        let (a, p) = start(&svc, "a");
        svc.submit_rating(&a, p.presentation_id, 0.4).unwrap();
        svc.export().unwrap()
    };
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap();
    f.write_all(br#"{"event":"rating_recorded","rating":{"session_id":"sess-0"#)
        .unwrap();
    drop(f);

    let svc = open(&path);
    assert_eq!(svc.export().unwrap(), before);
    // appends after recovery land on a clean line
    start(&svc, "b");
    drop(svc);
    assert_eq!(open(&path).export().unwrap().sessions.len(), 2);
}

#[test]
fn corruption_mid_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("journal.jsonl");
    {
        let svc = open(&path);
        start(&svc, "a");
    }
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, format!("garbage\n{text}")).unwrap();
    let (materials, _) = synthetic_study(120, 5, 7, 0, 11);
    let err = Service::builder(StudyConfig::default(), materials)
        .journal(&path, false)
        .build()
        .err()
        .expect("corrupt journal must not open");
    assert!(matches!(
        err,
        OpenError::Journal(studybench_service::journal::JournalError::Corrupt { line: 1, .. })
    ));
}

#[test]
fn invalid_config_refuses_to_start() {
    let (materials, _) = synthetic_study(120, 5, 7, 0, 11);
    let config = StudyConfig {
        score_min: 100,
        score_max: 1,
        ..StudyConfig::default()
    };
    assert!(matches!(
        Service::builder(config, materials).build(),
        Err(OpenError::Config(_))
    ));
}
