//! Subject rejection rules over completed sessions.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::StudyConfig;
use crate::domain::{ImageId, Session, SessionId, SessionState, Survey};
use crate::stats::{self, StatsError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionRule {
    RepeatInconsistency,
    LensViolation,
}

impl RejectionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionRule::RepeatInconsistency => "repeat_inconsistency",
            RejectionRule::LensViolation => "lens_violation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub session_id: SessionId,
    pub outcome: Outcome,
    pub triggered_rules: Vec<RejectionRule>,
    pub repeat_diffs: Vec<u32>,
    pub intra_srocc: Option<f64>,
}

impl ValidationVerdict {
    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepeatCheck {
    Pass { diffs: Vec<u32> },
    Fail { diffs: Vec<u32>, violations: usize },
}

impl RepeatCheck {
    pub fn diffs(&self) -> &[u32] {
        match self {
            RepeatCheck::Pass { diffs } | RepeatCheck::Fail { diffs, .. } => diffs,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self, RepeatCheck::Fail { .. })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("session {0} is not complete")]
    NotComplete(SessionId),
    #[error("session has {got} repeat pairs, expected {expected}")]
    RepeatCount { expected: usize, got: usize },
    #[error("image {0} has fewer than 2 pilot scores")]
    TooFewPilotScores(ImageId),
    #[error("no pilot images")]
    EmptyPilot,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Repeat-consistency rule: a diff counts as a violation only when it
/// strictly exceeds `threshold`.
pub fn evaluate_repeats(
    pairs: &[(i32, i32)],
    threshold: i32,
    violations_to_reject: usize,
) -> RepeatCheck {
    let diffs: Vec<u32> = pairs.iter().map(|(a, b)| a.abs_diff(*b)).collect();
    let violations = diffs
        .iter()
        .filter(|&&d| d as i64 > threshold as i64)
        .count();
    if violations >= violations_to_reject {
        RepeatCheck::Fail { diffs, violations }
    } else {
        RepeatCheck::Pass { diffs }
    }
}

/// Threshold from a pilot study: the mean over images of the per-image
/// sample standard deviation, rounded to the nearest integer.
pub fn derive_repeat_threshold(
    pilot_ratings: &BTreeMap<ImageId, Vec<f64>>,
) -> Result<i32, ValidationError> {
    if pilot_ratings.is_empty() {
        return Err(ValidationError::EmptyPilot);
    }
    let mut total = 0.0;
    for (id, scores) in pilot_ratings {
        if scores.len() < 2 {
            return Err(ValidationError::TooFewPilotScores(id.clone()));
        }
        total += stats::sample_std(scores);
    }
    Ok((total / pilot_ratings.len() as f64).round() as i32)
}

/// Fails subjects who normally wear corrective lenses but did not during
/// the task.
pub fn lens_rule(survey: &Survey) -> bool {
    !(survey.wears_lenses && !survey.wore_lenses_now)
}

/// SROCC between one subject's gold scores and the gold laboratory MOS.
/// Diagnostic only.
pub fn intra_subject_score(
    subject_gold_scores: &BTreeMap<ImageId, i32>,
    gold_lab_mos: &HashMap<ImageId, f64>,
) -> Result<f64, StatsError> {
    let (subject, lab): (Vec<f64>, Vec<f64>) = subject_gold_scores
        .iter()
        .filter_map(|(id, s)| gold_lab_mos.get(id).map(|m| (*s as f64, *m)))
        .unzip();
    Ok(stats::srocc(&subject, &lab)?.value)
}

pub fn validate_session(
    session: &Session,
    config: &StudyConfig,
    gold_lab_mos: &HashMap<ImageId, f64>,
) -> Result<ValidationVerdict, ValidationError> {
    if session.state != SessionState::Complete {
        return Err(ValidationError::NotComplete(session.session_id.clone()));
    }
    let Some(survey) = session.survey.as_ref() else {
        return Err(ValidationError::NotComplete(session.session_id.clone()));
    };
    let pairs = session.repeat_pairs();
    if pairs.len() != config.repeat_per_hit as usize {
        return Err(ValidationError::RepeatCount {
            expected: config.repeat_per_hit as usize,
            got: pairs.len(),
        });
    }
    let repeats = evaluate_repeats(
        &pairs,
        config.repeat_threshold,
        config.repeat_violations_to_reject as usize,
    );
    let mut triggered = Vec::new();
    if repeats.failed() {
        triggered.push(RejectionRule::RepeatInconsistency);
    }
    if !lens_rule(survey) {
        triggered.push(RejectionRule::LensViolation);
    }
    // Undefined when the subject gave every gold image the same score.
    let intra_srocc = intra_subject_score(&session.gold_scores(), gold_lab_mos).ok();
    Ok(ValidationVerdict {
        session_id: session.session_id.clone(),
        outcome: if triggered.is_empty() {
            Outcome::Accepted
        } else {
            Outcome::Rejected
        },
        triggered_rules: triggered,
        repeat_diffs: repeats.diffs().to_vec(),
        intra_srocc,
    })
}

/// Validates every complete session, in input order.
pub fn validate_all(
    sessions: &[Session],
    config: &StudyConfig,
    gold_lab_mos: &HashMap<ImageId, f64>,
) -> Result<Vec<ValidationVerdict>, ValidationError> {
    use rayon::prelude::*;
    sessions
        .par_iter()
        .filter(|s| s.state == SessionState::Complete)
        .map(|s| validate_session(s, config, gold_lab_mos))
        .collect()
}

/// Counts of rejections attributed to each rule. A session rejected by
/// both rules is counted under both.
pub fn rule_counts(verdicts: &[ValidationVerdict]) -> BTreeMap<RejectionRule, usize> {
    let mut counts = BTreeMap::new();
    for v in verdicts {
        for r in &v.triggered_rules {
            *counts.entry(*r).or_insert(0) += 1;
        }
    }
    counts
}

/// Writes the verdict table as CSV:
/// `session_id,outcome,rules,diffs,intra_srocc`.
pub fn write_verdicts_csv<W: std::io::Write>(
    out: W,
    verdicts: &[ValidationVerdict],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["session_id", "outcome", "rules", "diffs", "intra_srocc"])?;
    for v in verdicts {
        let rules: Vec<&str> = v.triggered_rules.iter().map(|r| r.as_str()).collect();
        let diffs: Vec<String> = v.repeat_diffs.iter().map(u32::to_string).collect();
        w.write_record([
            v.session_id.as_str(),
            match v.outcome {
                Outcome::Accepted => "accepted",
                Outcome::Rejected => "rejected",
            },
            &rules.join(";"),
            &diffs.join(";"),
            &v.intra_srocc.map(|r| format!("{r:.4}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
