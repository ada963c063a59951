//! Simulated crowdsourcing campaigns against a live session service.
//!
//! Workers only ever talk HTTP. Intake is sequential in worker order so
//! HIT assembly sees the same coverage snapshot on every run; rating and
//! survey traffic then runs concurrently. Each worker draws from its own
//! derived seed, so a fixed campaign seed reproduces every score.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use studybench_core::domain::SurveyForm;
use studybench_core::sim::{
    assign_kinds, random_survey, score_to_slider, LatentQualityMap, SimulatedWorker, WorkerKind,
    WorkerProfile,
};
use studybench_core::study::StoreSnapshot;
use studybench_core::validation::{self, ValidationError, ValidationVerdict};
use studybench_core::{seed, SessionId, StudyConfig, StudyMaterials, WorkerId};
use studybench_service::{
    BeginRequest, BeginResponse, BlockReason, ErrorBody, NextView, OpenError, PresentationView,
    RatingAck, RatingRequest, Service,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service answered {status}: {} ({})", body.message, body.code)]
    Api { status: u16, body: ErrorBody },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("validation: {0}")]
    Validation(#[from] ValidationError),
    #[error("mixture fractions sum to {0}, expected 1")]
    Mixture(f64),
    #[error("cannot start service: {0}")]
    Open(#[from] OpenError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub n_workers: usize,
    pub mixture: Vec<(WorkerKind, f64)>,
    pub seed: u64,
    pub parallelism: usize,
    /// Re-enter this many already-admitted workers; each must be blocked.
    pub duplicate_attempts: usize,
    pub worker_prefix: String,
}

impl CampaignSpec {
    pub fn new(n_workers: usize, mixture: Vec<(WorkerKind, f64)>, seed: u64) -> Self {
        CampaignSpec {
            n_workers,
            mixture,
            seed,
            parallelism: 16,
            duplicate_attempts: 0,
            worker_prefix: "w".into(),
        }
    }

    pub fn worker_id(&self, index: usize) -> WorkerId {
        WorkerId::new(format!("{}{index:05}", self.worker_prefix))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WorkerOutcome {
    Completed { session_id: SessionId },
    Blocked { reason: BlockReason },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: WorkerId,
    pub kind: WorkerKind,
    pub outcome: WorkerOutcome,
    pub ratings_submitted: usize,
    /// Present once the session has been validated.
    pub accepted: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub workers: usize,
    pub completed: usize,
    pub blocked: usize,
    pub failed: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl KindCounts {
    pub fn rejection_fraction(&self) -> f64 {
        if self.completed == 0 {
            0.0
        } else {
            self.rejected as f64 / self.completed as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateAttempt {
    pub worker_id: WorkerId,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub n_workers: usize,
    pub seed: u64,
    pub per_kind: BTreeMap<WorkerKind, KindCounts>,
    /// coverage count → number of images with that count.
    pub coverage_histogram: BTreeMap<u64, usize>,
    pub duplicate_attempts: Vec<DuplicateAttempt>,
    pub workers: Vec<WorkerRecord>,
    pub latent: LatentQualityMap,
}

impl CampaignReport {
    pub fn totals(&self) -> KindCounts {
        let mut t = KindCounts::default();
        for c in self.per_kind.values() {
            t.workers += c.workers;
            t.completed += c.completed;
            t.blocked += c.blocked;
            t.failed += c.failed;
            t.accepted += c.accepted;
            t.rejected += c.rejected;
        }
        t
    }
}

/// Report plus the raw export and verdicts it was computed from.
#[derive(Clone, Debug)]
pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub snapshot: StoreSnapshot,
    pub verdicts: Vec<ValidationVerdict>,
}

#[derive(Clone)]
struct Api {
    http: reqwest::Client,
    base: String,
}

impl Api {
    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, CampaignError> {
        let status = resp.status();
        if status.is_success() {
            Ok(resp.json().await?)
        } else {
            let body = resp
                .json::<ErrorBody>()
                .await
                .unwrap_or_else(|e| ErrorBody {
                    code: "unparseable".into(),
                    message: e.to_string(),
                });
            Err(CampaignError::Api {
                status: status.as_u16(),
                body,
            })
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, CampaignError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await?;
        Self::decode(resp).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, CampaignError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(resp).await
    }

    async fn begin(
        &self,
        worker: &WorkerId,
        confidence: f64,
    ) -> Result<BeginResponse, CampaignError> {
        self.post(
            "/sessions",
            &BeginRequest {
                worker_id: worker.clone(),
                confidence,
            },
        )
        .await
    }
}

struct Admitted {
    index: usize,
    worker: SimulatedWorker,
    session_id: SessionId,
    first: NextView,
}

fn profile_for(kind: WorkerKind, worker_seed: u64) -> WorkerProfile {
    let survey = random_survey(&mut seed::rng(seed::derive_str(worker_seed, "survey")));
    WorkerProfile::new(kind, survey)
}

async fn drive(
    api: &Api,
    latent: &LatentQualityMap,
    config: &StudyConfig,
    mut a: Admitted,
) -> (usize, usize, Result<SessionId, CampaignError>) {
    let mut submitted = 0;
    let result = async {
        let mut next = a.first;
        loop {
            let p: PresentationView = match next {
                NextView::Present(p) => p,
                NextView::SurveyDue => break,
                NextView::Closed { state } => {
                    return Err(CampaignError::Protocol(format!(
                        "session closed in {state}"
                    )))
                }
            };
            let q = latent.get(&p.image_id).ok_or_else(|| {
                CampaignError::Protocol(format!("no latent quality for {}", p.image_id))
            })?;
            let score = a.worker.rate(&p.image_id, q);
            let position = score_to_slider(score, config.score_min, config.score_max);
            let ack: RatingAck = api
                .post(
                    &format!("/sessions/{}/ratings", a.session_id),
                    &RatingRequest {
                        presentation_id: p.presentation_id,
                        position,
                    },
                )
                .await?;
            submitted += 1;
            next = ack.next;
        }
        let form = SurveyForm::from(&a.worker.profile.survey_template);
        let _: serde_json::Value = api
            .post(&format!("/sessions/{}/survey", a.session_id), &form)
            .await?;
        Ok(a.session_id.clone())
    }
    .await;
    (a.index, submitted, result)
}

/// Runs a campaign against the service at `base_url`.
pub async fn run_campaign(
    spec: &CampaignSpec,
    latent: &LatentQualityMap,
    base_url: &str,
) -> Result<CampaignOutcome, CampaignError> {
    let total: f64 = spec.mixture.iter().map(|m| m.1).sum();
    if (total - 1.0).abs() > 1e-9 || spec.mixture.iter().any(|m| m.1 < 0.0) {
        return Err(CampaignError::Mixture(total));
    }
    let api = Api {
        http: reqwest::Client::new(),
        base: base_url.trim_end_matches('/').to_owned(),
    };
    let config = api.get::<StoreSnapshot>("/export").await?.config;
    let kinds = assign_kinds(
        spec.n_workers,
        &spec.mixture,
        seed::derive_str(spec.seed, "kinds"),
    );

    let mut records: Vec<WorkerRecord> = Vec::with_capacity(spec.n_workers);
    let mut admitted = Vec::new();
    for (index, &kind) in kinds.iter().enumerate() {
        let worker_id = spec.worker_id(index);
        let worker_seed = seed::derive(spec.seed, index as u64);
        let profile = profile_for(kind, worker_seed);
        let outcome = match api.begin(&worker_id, profile.confidence).await {
            Ok(BeginResponse::Created {
                session_id, next, ..
            }) => {
                admitted.push(Admitted {
                    index,
                    worker: SimulatedWorker::new(worker_id.clone(), profile, worker_seed),
                    session_id,
                    first: next,
                });
                // filled in after the session is driven
                WorkerOutcome::Failed {
                    error: "not driven".into(),
                }
            }
            Ok(BeginResponse::Blocked { reason }) => WorkerOutcome::Blocked { reason },
            Err(e) => {
                tracing::warn!(worker = %worker_id, error = %e, "begin failed");
                WorkerOutcome::Failed {
                    error: e.to_string(),
                }
            }
        };
        records.push(WorkerRecord {
            worker_id,
            kind,
            outcome,
            ratings_submitted: 0,
            accepted: None,
        });
    }

    let mut duplicate_attempts = Vec::new();
    for index in 0..spec.duplicate_attempts.min(spec.n_workers) {
        let worker_id = spec.worker_id(index);
        let outcome = match api.begin(&worker_id, 0.95).await {
            Ok(BeginResponse::Blocked { reason }) => serde_json::to_value(reason)
                .ok()
                .and_then(|v| v.as_str().map(|s| format!("blocked:{s}")))
                .unwrap_or_default(),
            Ok(BeginResponse::Created { session_id, .. }) => format!("created:{session_id}"),
            Err(e) => format!("error:{e}"),
        };
        duplicate_attempts.push(DuplicateAttempt { worker_id, outcome });
    }

    let latent_arc = Arc::new(latent.clone());
    let results: Vec<_> = stream::iter(admitted)
        .map(|a| {
            let api = api.clone();
            let latent = latent_arc.clone();
            let config = config.clone();
            async move { drive(&api, &latent, &config, a).await }
        })
        .buffer_unordered(spec.parallelism.max(1))
        .collect()
        .await;
    for (index, submitted, result) in results {
        let r = &mut records[index];
        r.ratings_submitted = submitted;
        r.outcome = match result {
            Ok(session_id) => WorkerOutcome::Completed { session_id },
            Err(e) => {
                tracing::warn!(worker = %r.worker_id, error = %e, "session failed");
                WorkerOutcome::Failed {
                    error: e.to_string(),
                }
            }
        };
    }

    let snapshot: StoreSnapshot = api.get("/export").await?;
    let verdicts = validation::validate_all(
        &snapshot.sessions,
        &snapshot.config,
        &snapshot.gold_lab_mos(),
    )?;
    let report = build_report(
        spec,
        latent,
        records,
        duplicate_attempts,
        &snapshot,
        &verdicts,
    );
    Ok(CampaignOutcome {
        report,
        snapshot,
        verdicts,
    })
}

fn build_report(
    spec: &CampaignSpec,
    latent: &LatentQualityMap,
    mut records: Vec<WorkerRecord>,
    duplicate_attempts: Vec<DuplicateAttempt>,
    snapshot: &StoreSnapshot,
    verdicts: &[ValidationVerdict],
) -> CampaignReport {
    let accepted_by_session: HashMap<&SessionId, bool> = verdicts
        .iter()
        .map(|v| (&v.session_id, v.accepted()))
        .collect();
    let mut per_kind: BTreeMap<WorkerKind, KindCounts> = BTreeMap::new();
    for r in &mut records {
        let c = per_kind.entry(r.kind).or_default();
        c.workers += 1;
        match &r.outcome {
            WorkerOutcome::Completed { session_id } => {
                c.completed += 1;
                r.accepted = accepted_by_session.get(session_id).copied();
                match r.accepted {
                    Some(true) => c.accepted += 1,
                    Some(false) => c.rejected += 1,
                    None => {}
                }
            }
            WorkerOutcome::Blocked { .. } => c.blocked += 1,
            WorkerOutcome::Failed { .. } => c.failed += 1,
        }
    }
    let mut coverage_histogram = BTreeMap::new();
    for &n in snapshot.coverage.values() {
        *coverage_histogram.entry(n).or_insert(0) += 1;
    }
    records.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
    CampaignReport {
        n_workers: spec.n_workers,
        seed: spec.seed,
        per_kind,
        coverage_histogram,
        duplicate_attempts,
        workers: records,
        latent: latent.clone(),
    }
}

/// Starts an in-memory service on an ephemeral local port, runs the
/// campaign over HTTP, and shuts the server down.
pub async fn run_local_campaign(
    spec: &CampaignSpec,
    config: StudyConfig,
    materials: StudyMaterials,
    latent: &LatentQualityMap,
    service_seed: u64,
) -> Result<CampaignOutcome, CampaignError> {
    let service = Service::builder(config, materials)
        .seed(service_seed)
        .build()?;
    let (addr, handle) = studybench_service::spawn_local(Arc::new(service)).await?;
    let out = run_campaign(spec, latent, &format!("http://{addr}")).await;
    handle.abort();
    out
}

/// Blocking wrapper around [`run_local_campaign`] on a fresh runtime.
pub fn run_local_campaign_blocking(
    spec: &CampaignSpec,
    config: StudyConfig,
    materials: StudyMaterials,
    latent: &LatentQualityMap,
    service_seed: u64,
) -> Result<CampaignOutcome, CampaignError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(run_local_campaign(
        spec,
        config,
        materials,
        latent,
        service_seed,
    ))
}
