use std::time::Instant;

use studybench_campaign::*;
use studybench_core::sim::{synthetic_study, WorkerKind};
use studybench_core::StudyConfig;

fn run(spec: &CampaignSpec) -> CampaignOutcome {
    let (materials, latent) = synthetic_study(120, 5, 7, 0, 21);
    run_local_campaign_blocking(spec, StudyConfig::default(), materials, &latent, 3).unwrap()
}

#[test]
fn duplicates_are_blocked_and_runs_reproduce() {
    let mut spec = CampaignSpec::new(
        40,
        vec![(WorkerKind::Conscientious, 0.5), (WorkerKind::Spammer, 0.5)],
        8,
    );
    spec.duplicate_attempts = 3;
    let a = run(&spec);
    let b = run(&spec);
    assert_eq!(a.report, b.report);
    assert_eq!(a.verdicts, b.verdicts);
    let scores = |o: &CampaignOutcome| -> Vec<Vec<i32>> {
        o.snapshot
            .sessions
            .iter()
            .map(|s| s.ratings.iter().map(|r| r.score).collect())
            .collect()
    };
    assert_eq!(scores(&a), scores(&b));

    assert_eq!(a.report.duplicate_attempts.len(), 3);
    assert!(a
        .report
        .duplicate_attempts
        .iter()
        .all(|d| d.outcome == "blocked:repeat_worker"));
    let t = a.report.totals();
    assert_eq!((t.workers, t.completed, t.failed), (40, 40, 0));
    assert_eq!(a.report.per_kind[&WorkerKind::Spammer].workers, 20);
    assert!(a.report.workers.iter().all(|w| w.ratings_submitted == 55));
    assert!(a
        .report
        .workers
        .windows(2)
        .all(|w| w[0].worker_id < w[1].worker_id));
}

#[test]
fn least_covered_first_balances_load() {
    let started = Instant::now();
    let out = run(&CampaignSpec::new(
        200,
        vec![(WorkerKind::Conscientious, 1.0)],
        4,
    ));
    let bound = 200.0 * 38.0 / 120.0 * 0.5;
    let covered: usize = out.report.coverage_histogram.values().sum();
    assert_eq!(covered, 120);
    let min = *out.report.coverage_histogram.keys().next().unwrap();
    let max = *out.report.coverage_histogram.keys().last().unwrap();
    println!(
        "coverage min {min} max {max} bound {bound:.1} ({:.1?})",
        started.elapsed()
    );
    assert!(min as f64 >= bound);
    // least-covered-first keeps the spread to about one rating
    assert!(max - min <= 2);
}

#[test]
fn lens_violators_and_inconsistent_raters_are_caught() {
    let out = run(&CampaignSpec::new(
        60,
        vec![
            (WorkerKind::LensViolator, 0.5),
            (WorkerKind::CenterSpammer, 0.5),
        ],
        6,
    ));
    let lens = &out.report.per_kind[&WorkerKind::LensViolator];
    assert_eq!(lens.rejected, lens.completed);
    // centered scores agree with themselves: the repeat rule cannot see them
    let center = &out.report.per_kind[&WorkerKind::CenterSpammer];
    assert_eq!(center.rejected, 0);
}

#[test]
fn bad_mixture_is_refused() {
    let (materials, latent) = synthetic_study(120, 5, 7, 0, 21);
    let spec = CampaignSpec::new(5, vec![(WorkerKind::Conscientious, 0.7)], 1);
    assert!(matches!(
        run_local_campaign_blocking(&spec, StudyConfig::default(), materials, &latent, 3),
        Err(CampaignError::Mixture(_))
    ));
}
