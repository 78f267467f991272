//! HTTP API over interactive KAN sessions.
//!
//! Reads see the last committed snapshot. Each session admits one mutation
//! at a time; a second concurrent one gets `409`.

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use kanlab_core::simplify::AffineFit;
use kanlab_core::tasks::{gen_task, task_names};
use kanlab_core::train::HistoryRow;
use kanlab_core::KanError;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::OwnedMutexGuard;

pub use error::{ApiError, ErrorBody};
pub use session::{
    ExtendRequest, FixRequest, FormulaDocument, PruneRequest, PruneSummary, SavedSession, Session, SessionSpec,
    Snapshot, StateDocument, TrainReport, TrainRequest,
};

/// All live sessions.
#[derive(Debug, Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn insert(&self, snapshot: Snapshot) -> String {
        let mut table = self.sessions.write().expect("session table poisoned");
        let mut rng = rand::rng();
        loop {
            let id = format!("{:016x}", rng.random::<u64>());
            if !table.contains_key(&id) {
                table.insert(id.clone(), Arc::new(Session::new(snapshot)));
                return id;
            }
        }
    }

    /// Hold the writer slot of session `id`.
    pub fn try_begin_mutation(&self, id: &str) -> Result<OwnedMutexGuard<()>, ApiError> {
        self.session(id)?.begin_mutation()
    }
}

/// JSON body whose rejections come back as `400` with the error body.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(e) => Err(rejection(e)),
        }
    }
}

fn rejection(e: JsonRejection) -> ApiError {
    ApiError::bad_request(e.body_text())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub version: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEntry {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mutated<T> {
    pub version: u64,
    #[serde(flatten)]
    pub result: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Empty {}

#[derive(Debug, Clone, Deserialize)]
pub struct SuggestQuery {
    pub l: usize,
    pub i: usize,
    pub j: usize,
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FormulaQuery {
    #[serde(default = "default_decimals")]
    pub decimals: usize,
}

fn default_decimals() -> usize {
    2
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(job: impl FnOnce() -> Result<T, KanError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(job)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::core)
}

/// Run `op` on the committed snapshot off the async runtime, then commit.
async fn mutate<T: Send + 'static>(
    state: &AppState,
    id: &str,
    op: impl FnOnce(&Snapshot) -> Result<(Snapshot, T), KanError> + Send + 'static,
) -> ApiResult<Mutated<T>> {
    let session = state.session(id)?;
    let _guard = session.begin_mutation()?;
    let current = session.snapshot();
    let (next, result) = blocking(move || op(&current)).await?;
    let version = next.version;
    session.commit(next);
    Ok(Json(Mutated { version, result }))
}

async fn create(State(state): State<Shared>, JsonBody(spec): JsonBody<SessionSpec>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let snapshot = tokio::task::spawn_blocking(move || Snapshot::create(spec))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let version = snapshot.version;
    let id = state.insert(snapshot);
    Ok((StatusCode::CREATED, Json(Created { id, version })))
}

async fn load(State(state): State<Shared>, JsonBody(saved): JsonBody<SavedSession>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let snapshot = tokio::task::spawn_blocking(move || Snapshot::load(saved))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let version = snapshot.version;
    let id = state.insert(snapshot);
    Ok((StatusCode::CREATED, Json(Created { id, version })))
}

async fn tasks() -> ApiResult<Vec<TaskEntry>> {
    let entries = blocking(|| {
        task_names()
            .into_iter()
            .map(|name| {
                let data = gen_task(name, 1, 1, 0)?;
                Ok(TaskEntry {
                    name: name.to_string(),
                    inputs: data.d(),
                    outputs: data.m(),
                })
            })
            .collect()
    })
    .await?;
    Ok(Json(entries))
}

async fn state_of(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<StateDocument> {
    let snap = state.session(&id)?.snapshot();
    Ok(Json(snap.state(&id)))
}

async fn history(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Vec<HistoryRow>> {
    Ok(Json(state.session(&id)?.snapshot().history.rows.clone()))
}

async fn save(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<SavedSession> {
    Ok(Json(state.session(&id)?.snapshot().save()))
}

async fn train(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<TrainRequest>,
) -> ApiResult<Mutated<TrainReport>> {
    mutate(&state, &id, move |s| s.train(&req)).await
}

async fn extend(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ExtendRequest>,
) -> ApiResult<Mutated<Empty>> {
    mutate(&state, &id, move |s| Ok((s.extend(req.grid)?, Empty {}))).await
}

async fn prune(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<PruneRequest>,
) -> ApiResult<Mutated<PruneSummary>> {
    mutate(&state, &id, move |s| s.prune(req.theta)).await
}

async fn fix(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<FixRequest>,
) -> ApiResult<Mutated<AffineFit>> {
    mutate(&state, &id, move |s| s.fix(&req)).await
}

async fn suggest(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<SuggestQuery>,
) -> ApiResult<Vec<AffineFit>> {
    let snap = state.session(&id)?.snapshot();
    let ranked = blocking(move || snap.suggest((q.l, q.i, q.j), q.top)).await?;
    Ok(Json(ranked))
}

async fn formula(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<FormulaQuery>,
) -> ApiResult<FormulaDocument> {
    let snap = state.session(&id)?.snapshot();
    Ok(Json(snap.formula(q.decimals)?))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tasks", get(tasks))
        .route("/sessions", post(create))
        .route("/sessions/load", post(load))
        .route("/sessions/{id}/state", get(state_of))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/save", get(save))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/extend", post(extend))
        .route("/sessions/{id}/prune", post(prune))
        .route("/sessions/{id}/fix", post(fix))
        .route("/sessions/{id}/suggest", get(suggest))
        .route("/sessions/{id}/formula", get(formula))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
