//! Session service for a crowdsourced image-quality study: worker intake,
//! presentation serving, rating and survey capture, all journaled.

pub mod clock;
pub mod error;
pub mod http;
pub mod journal;
pub mod service;
pub mod store;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{ErrorBody, ServiceError};
pub use http::{router, serve, spawn_local, BeginRequest, RatingRequest};
pub use service::{OpenError, Service, ServiceBuilder};
pub use store::{
    BeginResponse, BlockReason, NextView, Phase, PresentationView, RatingAck, SessionView,
    SurveyAck,
};
