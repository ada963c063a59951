use serde::{Deserialize, Serialize};
use studybench_core::{PresentationId, SessionId, SessionState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session {0}")]
    NotFound(SessionId),
    #[error("session is {state}, expected one of {expected}")]
    WrongState {
        state: SessionState,
        expected: &'static str,
    },
    #[error("session expired")]
    Expired,
    #[error("presentation {0:?} is not part of this HIT")]
    UnknownPresentation(PresentationId),
    #[error("presentation {got:?} is not the one being served ({expected:?})")]
    OutOfOrder {
        got: PresentationId,
        expected: Option<PresentationId>,
    },
    #[error("presentation {0:?} was already rated with a different position")]
    ConflictingDuplicate(PresentationId),
    #[error("slider position {0} outside [0, 1]")]
    InvalidPosition(f64),
    #[error("survey is missing: {}", .0.join(", "))]
    IncompleteSurvey(Vec<&'static str>),
    #[error("session already complete")]
    AlreadyComplete,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("worker id must be non-empty")]
    EmptyWorkerId,
    #[error("invalid request body: {0}")]
    InvalidBody(String),
    #[error("cannot assemble HIT: {0}")]
    Assembly(#[from] studybench_core::hit::HitError),
    #[error("journal: {0}")]
    Journal(#[from] crate::journal::JournalError),
}

/// Machine-readable error body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::WrongState { .. } => "wrong_state",
            ServiceError::Expired => "session_expired",
            ServiceError::UnknownPresentation(_) => "unknown_presentation",
            ServiceError::OutOfOrder { .. } => "out_of_order",
            ServiceError::ConflictingDuplicate(_) => "conflicting_duplicate",
            ServiceError::InvalidPosition(_) => "invalid_position",
            ServiceError::IncompleteSurvey(_) => "incomplete_survey",
            ServiceError::AlreadyComplete => "already_complete",
            ServiceError::InvalidConfidence(_) => "invalid_confidence",
            ServiceError::EmptyWorkerId => "invalid_worker_id",
            ServiceError::InvalidBody(_) => "invalid_body",
            ServiceError::Assembly(_) => "assembly_failed",
            ServiceError::Journal(_) => "storage_failure",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_owned(),
            message: self.to_string(),
        }
    }
}
