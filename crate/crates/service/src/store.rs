//! The session state machine, worker ledger and coverage map.
//!
//! `Store` is synchronous and does no I/O. Every mutation is expressed as
//! an [`Event`]: the `decide_*` methods inspect state and return the event
//! to commit, [`Store::apply`] folds it in. Replaying a journal through
//! `apply` reproduces the store exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use studybench_core::domain::{slider_to_score, Rating, Survey, SurveyForm};
use studybench_core::hit::NextStep;
use studybench_core::study::StoreSnapshot;
use studybench_core::{
    assemble_hit, seed, ImageId, PresentationId, Role, Session, SessionId, SessionState,
    StudyConfig, StudyMaterials, WorkerId,
};

use crate::error::ServiceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionBegun {
        seq: u64,
        session: Box<Session>,
    },
    RatingRecorded {
        rating: Rating,
    },
    SurveySubmitted {
        session_id: SessionId,
        survey: Survey,
        at: DateTime<Utc>,
    },
    SessionExpired {
        session_id: SessionId,
        at: DateTime<Utc>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    RepeatWorker,
    LowConfidence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationOutcome {
    InProgress,
    Complete,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participation {
    pub session_id: SessionId,
    pub outcome: ParticipationOutcome,
}

/// Worker → participation. Blocked attempts are not recorded, so a worker
/// turned away for low confidence may come back.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerLedger(pub HashMap<WorkerId, Participation>);

impl WorkerLedger {
    pub fn get(&self, worker: &WorkerId) -> Option<&Participation> {
        self.0.get(worker)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn set_outcome(&mut self, worker: &WorkerId, outcome: ParticipationOutcome) {
        if let Some(p) = self.0.get_mut(worker) {
            p.outcome = outcome;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Testing,
}

/// What a client sees of a presentation. The role (gold, repeat, ...)
/// is deliberately withheld.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresentationView {
    pub presentation_id: PresentationId,
    pub position: u32,
    pub total: u32,
    pub phase: Phase,
    pub image_id: ImageId,
    pub uri: String,
    pub training_done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextView {
    Present(PresentationView),
    SurveyDue,
    Closed { state: SessionState },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BeginResponse {
    Created {
        session_id: SessionId,
        state: SessionState,
        remuneration: String,
        next: NextView,
    },
    Blocked {
        reason: BlockReason,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingAck {
    pub session_id: SessionId,
    pub state: SessionState,
    pub next: NextView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyAck {
    pub session_id: SessionId,
    pub state: SessionState,
    pub finished_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub state: SessionState,
    pub rated: usize,
    pub total: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

pub enum BeginDecision {
    Blocked(BlockReason),
    Create(Event),
}

pub enum RatingDecision {
    Replay(RatingAck),
    Record(Event),
}

#[derive(Clone, Debug)]
pub struct Store {
    config: StudyConfig,
    materials: StudyMaterials,
    master_seed: u64,
    sessions: BTreeMap<SessionId, Session>,
    ledger: WorkerLedger,
    /// Completed sessions only.
    coverage: HashMap<ImageId, u64>,
    /// Sessions still in flight.
    reserved: HashMap<ImageId, u64>,
    next_seq: u64,
}

fn covered_images(session: &Session) -> impl Iterator<Item = &ImageId> {
    session
        .plan
        .presentations
        .iter()
        .filter(|p| p.role.counts_for_mos())
        .map(|p| &p.image_id)
}

fn transition(session: &mut Session, to: SessionState) {
    debug_assert!(
        session.state.can_transition(to),
        "illegal transition {} -> {}",
        session.state,
        to
    );
    session.state = to;
}

impl Store {
    pub fn new(config: StudyConfig, materials: StudyMaterials, master_seed: u64) -> Self {
        Store {
            config,
            materials,
            master_seed,
            sessions: BTreeMap::new(),
            ledger: WorkerLedger::default(),
            coverage: HashMap::new(),
            reserved: HashMap::new(),
            next_seq: 0,
        }
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn ledger(&self) -> &WorkerLedger {
        &self.ledger
    }

    pub fn session(&self, id: &SessionId) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    /// Completed plus reserved counts: what HIT assembly balances against.
    pub fn coverage_snapshot(&self) -> HashMap<ImageId, u64> {
        let mut snap = self.coverage.clone();
        for (id, n) in &self.reserved {
            *snap.entry(id.clone()).or_default() += n;
        }
        snap
    }

    pub fn completed_coverage(&self) -> &HashMap<ImageId, u64> {
        &self.coverage
    }

    fn get(&self, id: &SessionId) -> Result<&Session, ServiceError> {
        self.sessions
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(id.clone()))
    }

    fn deadline(&self, session: &Session) -> DateTime<Utc> {
        session.started_at + Duration::minutes(i64::from(self.config.session_expiry_minutes))
    }

    fn is_stale(&self, session: &Session, now: DateTime<Utc>) -> bool {
        !session.state.is_terminal() && now >= self.deadline(session)
    }

    /// Expiry event for one session, if it has run out of time.
    pub fn expiry_of(&self, id: &SessionId, now: DateTime<Utc>) -> Option<Event> {
        let s = self.sessions.get(id)?;
        self.is_stale(s, now).then(|| Event::SessionExpired {
            session_id: id.clone(),
            at: now,
        })
    }

    pub fn expiries(&self, now: DateTime<Utc>) -> Vec<Event> {
        self.sessions
            .values()
            .filter(|s| self.is_stale(s, now))
            .map(|s| Event::SessionExpired {
                session_id: s.session_id.clone(),
                at: now,
            })
            .collect()
    }

    pub fn decide_begin(
        &self,
        worker_id: &WorkerId,
        confidence: f64,
        now: DateTime<Utc>,
    ) -> Result<BeginDecision, ServiceError> {
        if worker_id.as_str().trim().is_empty() {
            return Err(ServiceError::EmptyWorkerId);
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ServiceError::InvalidConfidence(confidence));
        }
        if self.ledger.get(worker_id).is_some() {
            return Ok(BeginDecision::Blocked(BlockReason::RepeatWorker));
        }
        if confidence <= self.config.min_confidence {
            return Ok(BeginDecision::Blocked(BlockReason::LowConfidence));
        }
        let seq = self.next_seq;
        let plan = assemble_hit(
            &self.config,
            &self.materials,
            &self.coverage_snapshot(),
            worker_id,
            seed::derive(self.master_seed, seq),
        )?;
        let session = Session {
            session_id: SessionId::new(format!("sess-{seq:06}")),
            worker_id: worker_id.clone(),
            confidence,
            state: SessionState::Instructions,
            plan,
            ratings: Vec::new(),
            survey: None,
            started_at: now,
            finished_at: None,
        };
        Ok(BeginDecision::Create(Event::SessionBegun {
            seq,
            session: Box::new(session),
        }))
    }

    pub fn decide_rating(
        &self,
        id: &SessionId,
        presentation_id: PresentationId,
        position: f64,
        now: DateTime<Utc>,
    ) -> Result<RatingDecision, ServiceError> {
        let session = self.get(id)?;
        if session.state == SessionState::Rejected {
            return Err(ServiceError::Expired);
        }
        let score = slider_to_score(position, self.config.score_min, self.config.score_max)
            .ok_or(ServiceError::InvalidPosition(position))?;
        if let Some(prev) = session
            .ratings
            .iter()
            .find(|r| r.presentation_id == presentation_id)
        {
            return if prev.slider_position == position {
                Ok(RatingDecision::Replay(
                    self.ack_after(session, presentation_id),
                ))
            } else {
                Err(ServiceError::ConflictingDuplicate(presentation_id))
            };
        }
        if !session.state.accepts_ratings() {
            return Err(ServiceError::WrongState {
                state: session.state,
                expected: "training or testing",
            });
        }
        let pres = session
            .plan
            .get(presentation_id)
            .ok_or(ServiceError::UnknownPresentation(presentation_id))?;
        let expected = session.plan.presentations.get(session.ratings.len());
        if expected.map(|p| p.presentation_id) != Some(presentation_id) {
            return Err(ServiceError::OutOfOrder {
                got: presentation_id,
                expected: expected.map(|p| p.presentation_id),
            });
        }
        let since = session
            .ratings
            .last()
            .map_or(session.started_at, |r| r.rated_at);
        Ok(RatingDecision::Record(Event::RatingRecorded {
            rating: Rating {
                session_id: id.clone(),
                presentation_id,
                image_id: pres.image_id.clone(),
                score,
                role: pres.role,
                elapsed_ms: (now - since).num_milliseconds().max(0) as u64,
                slider_position: position,
                rated_at: now,
            },
        }))
    }

    pub fn decide_survey(
        &self,
        id: &SessionId,
        form: &SurveyForm,
        now: DateTime<Utc>,
    ) -> Result<Event, ServiceError> {
        let session = self.get(id)?;
        match session.state {
            SessionState::Survey => {}
            SessionState::Complete => return Err(ServiceError::AlreadyComplete),
            SessionState::Rejected => return Err(ServiceError::Expired),
            state => {
                return Err(ServiceError::WrongState {
                    state,
                    expected: "survey",
                })
            }
        }
        let survey = form.complete().map_err(ServiceError::IncompleteSurvey)?;
        Ok(Event::SurveySubmitted {
            session_id: id.clone(),
            survey,
            at: now,
        })
    }

    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::SessionBegun { seq, session } => {
                let mut session = (**session).clone();
                transition(&mut session, SessionState::Training);
                if session.plan.training_len() == 0 {
                    transition(&mut session, SessionState::Testing);
                }
                for id in covered_images(&session) {
                    *self.reserved.entry(id.clone()).or_default() += 1;
                }
                self.ledger.0.insert(
                    session.worker_id.clone(),
                    Participation {
                        session_id: session.session_id.clone(),
                        outcome: ParticipationOutcome::InProgress,
                    },
                );
                self.next_seq = self.next_seq.max(seq + 1);
                self.sessions.insert(session.session_id.clone(), session);
            }
            Event::RatingRecorded { rating } => {
                let Some(s) = self.sessions.get_mut(&rating.session_id) else {
                    return;
                };
                s.ratings.push(rating.clone());
                let training = s.plan.training_len();
                if s.state == SessionState::Training && s.ratings.len() >= training {
                    transition(s, SessionState::Testing);
                }
                if s.state == SessionState::Testing && s.ratings.len() == s.plan.len() {
                    transition(s, SessionState::Survey);
                }
            }
            Event::SurveySubmitted {
                session_id,
                survey,
                at,
            } => {
                let Some(s) = self.sessions.get_mut(session_id) else {
                    return;
                };
                s.survey = Some(survey.clone());
                s.finished_at = Some(*at);
                transition(s, SessionState::Complete);
                let ids: Vec<ImageId> = covered_images(s).cloned().collect();
                let worker = s.worker_id.clone();
                for id in ids {
                    self.release(&id);
                    *self.coverage.entry(id).or_default() += 1;
                }
                self.ledger
                    .set_outcome(&worker, ParticipationOutcome::Complete);
            }
            Event::SessionExpired { session_id, at } => {
                let Some(s) = self.sessions.get_mut(session_id) else {
                    return;
                };
                if s.state.is_terminal() {
                    return;
                }
                s.finished_at = Some(*at);
                transition(s, SessionState::Rejected);
                let ids: Vec<ImageId> = covered_images(s).cloned().collect();
                let worker = s.worker_id.clone();
                for id in ids {
                    self.release(&id);
                }
                self.ledger
                    .set_outcome(&worker, ParticipationOutcome::Rejected);
            }
        }
    }

    fn release(&mut self, id: &ImageId) {
        if let Some(n) = self.reserved.get_mut(id) {
            *n -= 1;
            if *n == 0 {
                self.reserved.remove(id);
            }
        }
    }

    fn view_of(&self, session: &Session, step: NextStep) -> NextView {
        match step {
            NextStep::SurveyDue => NextView::SurveyDue,
            NextStep::Present {
                presentation,
                training_done,
            } => NextView::Present(PresentationView {
                presentation_id: presentation.presentation_id,
                position: presentation.position,
                total: session.plan.len() as u32,
                phase: if presentation.role == Role::Training {
                    Phase::Training
                } else {
                    Phase::Testing
                },
                uri: self
                    .materials
                    .uri_of(&presentation.image_id)
                    .unwrap_or_default()
                    .to_owned(),
                image_id: presentation.image_id,
                training_done,
            }),
        }
    }

    fn step_after(session: &Session, upto: usize) -> NextStep {
        let completed: BTreeSet<PresentationId> = session.plan.presentations[..upto]
            .iter()
            .map(|p| p.presentation_id)
            .collect();
        session
            .plan
            .next_presentation(&completed)
            .expect("completed ids come from the plan")
    }

    /// The acknowledgement that was (or would have been) returned right
    /// after rating `presentation_id`; identical on replay.
    fn ack_after(&self, session: &Session, presentation_id: PresentationId) -> RatingAck {
        let upto = session
            .plan
            .presentations
            .iter()
            .position(|p| p.presentation_id == presentation_id)
            .map_or(0, |i| i + 1);
        let step = Self::step_after(session, upto);
        let state = match &step {
            NextStep::SurveyDue => SessionState::Survey,
            NextStep::Present { presentation, .. } if presentation.role == Role::Training => {
                SessionState::Training
            }
            NextStep::Present { .. } => SessionState::Testing,
        };
        RatingAck {
            session_id: session.session_id.clone(),
            state,
            next: self.view_of(session, step),
        }
    }

    pub fn rating_ack(&self, id: &SessionId, presentation_id: PresentationId) -> Option<RatingAck> {
        self.sessions
            .get(id)
            .map(|s| self.ack_after(s, presentation_id))
    }

    pub fn next_view(&self, id: &SessionId) -> Result<NextView, ServiceError> {
        let s = self.get(id)?;
        Ok(match s.state {
            SessionState::Training | SessionState::Testing | SessionState::Survey => {
                self.view_of(s, Self::step_after(s, s.ratings.len()))
            }
            state => NextView::Closed { state },
        })
    }

    pub fn begin_response(&self, id: &SessionId) -> Result<BeginResponse, ServiceError> {
        let s = self.get(id)?;
        Ok(BeginResponse::Created {
            session_id: s.session_id.clone(),
            state: s.state,
            remuneration: self.config.remuneration_label.clone(),
            next: self.next_view(id)?,
        })
    }

    pub fn session_view(&self, id: &SessionId) -> Result<SessionView, ServiceError> {
        let s = self.get(id)?;
        Ok(SessionView {
            session_id: s.session_id.clone(),
            worker_id: s.worker_id.clone(),
            state: s.state,
            rated: s.ratings.len(),
            total: s.plan.len(),
            started_at: s.started_at,
            finished_at: s.finished_at,
        })
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            config: self.config.clone(),
            gold: self.materials.gold.clone(),
            coverage: self.coverage.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            sessions: self.sessions.values().cloned().collect(),
        }
    }
}
