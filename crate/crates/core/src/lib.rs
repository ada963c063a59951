//! Core of a self-hosted crowdsourced image-quality study: HIT design,
//! subject validation, opinion-score aggregation, consistency statistics,
//! a rater simulator and an objective-model evaluation harness.
//!
//! Everything here is pure and synchronous; the HTTP session service and
//! the campaign driver live in sibling crates.

pub mod aggregation;
pub mod benchmark;
pub mod config;
pub mod domain;
pub mod factors;
pub mod hit;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod study;
pub mod validation;

pub use config::StudyConfig;
pub use domain::{ImageId, PresentationId, Role, Session, SessionId, SessionState, WorkerId};
pub use hit::{assemble_hit, HitPlan, NextStep, Presentation, StudyMaterials};
