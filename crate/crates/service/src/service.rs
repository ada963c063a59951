use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use studybench_core::config::ConfigViolation;
use studybench_core::domain::SurveyForm;
use studybench_core::study::StoreSnapshot;
use studybench_core::{PresentationId, SessionId, StudyConfig, StudyMaterials, WorkerId};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::error::ServiceError;
use crate::journal::{Journal, JournalError};
use crate::store::*;

#[derive(Debug, Error)]
pub enum OpenError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigViolation>),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

struct Inner {
    store: Store,
    journal: Option<Journal>,
}

impl Inner {
    /// Journal first, then apply: nothing is acknowledged that a restart
    /// would forget.
    fn commit(&mut self, events: &[Event]) -> Result<(), ServiceError> {
        if let Some(j) = self.journal.as_mut() {
            j.append(events)?;
        }
        for e in events {
            self.store.apply(e);
        }
        Ok(())
    }

    fn expire_one(&mut self, id: &SessionId, clock: &dyn Clock) -> Result<(), ServiceError> {
        if let Some(e) = self.store.expiry_of(id, clock.now()) {
            self.commit(&[e])?;
        }
        Ok(())
    }

    fn expire_all(&mut self, clock: &dyn Clock) -> Result<(), ServiceError> {
        let events = self.store.expiries(clock.now());
        self.commit(&events)
    }
}

/// Thread-safe session service. One lock guards the store and the
/// journal, so every mutation (ledger check-and-set included) is atomic
/// and journal order equals apply order.
pub struct Service {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
}

impl Service {
    pub fn builder(config: StudyConfig, materials: StudyMaterials) -> ServiceBuilder {
        ServiceBuilder {
            config,
            materials,
            master_seed: 0,
            journal: None,
            sync: false,
            clock: Arc::new(SystemClock),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn begin_session(
        &self,
        worker_id: &WorkerId,
        confidence: f64,
    ) -> Result<BeginResponse, ServiceError> {
        let mut inner = self.lock();
        inner.expire_all(&*self.clock)?;
        match inner
            .store
            .decide_begin(worker_id, confidence, self.clock.now())?
        {
            BeginDecision::Blocked(reason) => {
                tracing::debug!(worker = %worker_id, ?reason, "blocked");
                Ok(BeginResponse::Blocked { reason })
            }
            BeginDecision::Create(event) => {
                let Event::SessionBegun { session, .. } = &event else {
                    unreachable!("begin decides a SessionBegun event")
                };
                let id = session.session_id.clone();
                inner.commit(&[event])?;
                inner.store.begin_response(&id)
            }
        }
    }

    pub fn next(&self, id: &SessionId) -> Result<NextView, ServiceError> {
        let mut inner = self.lock();
        inner.expire_one(id, &*self.clock)?;
        inner.store.next_view(id)
    }

    pub fn submit_rating(
        &self,
        id: &SessionId,
        presentation_id: PresentationId,
        position: f64,
    ) -> Result<RatingAck, ServiceError> {
        let mut inner = self.lock();
        inner.expire_one(id, &*self.clock)?;
        match inner
            .store
            .decide_rating(id, presentation_id, position, self.clock.now())?
        {
            RatingDecision::Replay(ack) => Ok(ack),
            RatingDecision::Record(event) => {
                inner.commit(&[event])?;
                Ok(inner
                    .store
                    .rating_ack(id, presentation_id)
                    .expect("session exists"))
            }
        }
    }

    pub fn submit_survey(
        &self,
        id: &SessionId,
        form: &SurveyForm,
    ) -> Result<SurveyAck, ServiceError> {
        let mut inner = self.lock();
        inner.expire_one(id, &*self.clock)?;
        let event = inner.store.decide_survey(id, form, self.clock.now())?;
        inner.commit(&[event])?;
        let s = inner.store.session(id).expect("session exists");
        Ok(SurveyAck {
            session_id: id.clone(),
            state: s.state,
            finished_at: s.finished_at.expect("complete sessions are finished"),
        })
    }

    pub fn session(&self, id: &SessionId) -> Result<SessionView, ServiceError> {
        let mut inner = self.lock();
        inner.expire_one(id, &*self.clock)?;
        inner.store.session_view(id)
    }

    /// Sweeps expired sessions, then snapshots everything.
    pub fn export(&self) -> Result<StoreSnapshot, ServiceError> {
        let mut inner = self.lock();
        inner.expire_all(&*self.clock)?;
        Ok(inner.store.snapshot())
    }

    pub fn ledger(&self) -> WorkerLedger {
        self.lock().store.ledger().clone()
    }

    pub fn session_count(&self) -> usize {
        self.lock().store.sessions().count()
    }
}

pub struct ServiceBuilder {
    config: StudyConfig,
    materials: StudyMaterials,
    master_seed: u64,
    journal: Option<std::path::PathBuf>,
    sync: bool,
    clock: Arc<dyn Clock>,
}

impl ServiceBuilder {
    pub fn seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    /// Persist to (and replay from) a journal file. `sync` fsyncs every
    /// append; without it a flushed write still survives a process crash.
    pub fn journal(mut self, path: &Path, sync: bool) -> Self {
        self.journal = Some(path.to_owned());
        self.sync = sync;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn build(self) -> Result<Service, OpenError> {
        self.config.validate().map_err(OpenError::Config)?;
        let mut store = Store::new(self.config, self.materials, self.master_seed);
        let journal = match &self.journal {
            Some(path) => {
                let (journal, events) = Journal::open(path, self.sync)?;
                for e in &events {
                    store.apply(e);
                }
                tracing::info!(
                    path = %path.display(),
                    events = events.len(),
                    sessions = store.sessions().count(),
                    "journal replayed"
                );
                Some(journal)
            }
            None => None,
        };
        Ok(Service {
            inner: Mutex::new(Inner { store, journal }),
            clock: self.clock,
        })
    }
}
