//! HTTP front end for the simulator: one-shot runs, batch comparisons and
//! sweeps, config validation, and stepwise sessions that keep a run's state
//! between requests.
//!
//! Simulation work runs on the blocking thread pool so the async workers stay
//! responsive while long batches execute.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use mmct_core::api::{
    ApiError, CompareRequest, Health, RunRequest, SessionInfo, SessionRequest, StepRequest, StepResponse, SweepRequest,
    ValidateRequest, ValidateResponse,
};
use mmct_core::config::{parse_config, ConfigError, ExperimentConfig};
use mmct_core::experiment::{self, BatchResult};
use mmct_core::metrics::RunReport;
use mmct_core::scenario::{run_scenario, Runner};
use mmct_core::SchedulerKind;

/// Error returned by a handler, rendered as an [`ApiError`] body.
#[derive(Debug)]
pub struct AppError {
    status: StatusCode,
    body: ApiError,
}

impl AppError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                error: error.into(),
                details: Vec::new(),
            },
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    fn unprocessable(error: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error)
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        let mut err = AppError::unprocessable("invalid config");
        err.body.details = e.messages();
        err
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, AppError>;

#[derive(Default)]
struct Sessions {
    next_id: AtomicU64,
    runs: Mutex<HashMap<u64, Arc<Mutex<Runner>>>>,
}

impl Sessions {
    fn get(&self, id: u64) -> ApiResult<Arc<Mutex<Runner>>> {
        self.runs
            .lock()
            .expect("session map lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| AppError::not_found(format!("no session {id}")))
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Sessions>,
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/config/validate", post(validate))
        .route("/v1/run", post(run))
        .route("/v1/compare", post(compare))
        .route("/v1/sweep", post(sweep))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_info).delete(delete_session))
        .route("/v1/sessions/{id}/step", post(step_session))
        .with_state(AppState::default())
}

/// Serves on an already bound listener until the process exits.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

fn kind(name: &str) -> ApiResult<SchedulerKind> {
    name.parse()
        .map_err(|e: mmct_core::schedulers::UnknownScheduler| AppError::new(StatusCode::BAD_REQUEST, e.to_string()))
}

fn kinds(names: Option<&[String]>, default: &[SchedulerKind]) -> ApiResult<Vec<SchedulerKind>> {
    match names {
        Some(list) => list.iter().map(|n| kind(n)).collect(),
        None => Ok(default.to_vec()),
    }
}

fn jobs(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn validate(Json(req): Json<ValidateRequest>) -> (StatusCode, Json<ValidateResponse>) {
    match parse_config(&req.config) {
        Ok(cfg) => (
            StatusCode::OK,
            Json(ValidateResponse {
                valid: true,
                config: Some(cfg),
                errors: Vec::new(),
            }),
        ),
        Err(e) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(ValidateResponse {
                valid: false,
                config: None,
                errors: e.messages(),
            }),
        ),
    }
}

async fn run(Json(req): Json<RunRequest>) -> ApiResult<Json<RunReport>> {
    let cfg = parse_config(&req.config)?;
    let kind = kind(&req.scheduler)?;
    let report = blocking(move || {
        run_scenario(&cfg.scenario(), kind, req.seed).map_err(|e| AppError::unprocessable(e.to_string()))
    })
    .await?;
    Ok(Json(report))
}

async fn compare(Json(req): Json<CompareRequest>) -> ApiResult<Json<BatchResult>> {
    let cfg: ExperimentConfig = parse_config(&req.config)?;
    let schedulers = kinds(req.schedulers.as_deref(), &cfg.experiment.schedulers)?;
    let seeds = req.seeds.unwrap_or_else(|| cfg.experiment.seeds.clone());
    let jobs = jobs(req.jobs);
    let result = blocking(move || Ok(experiment::compare(&cfg, &schedulers, &seeds, jobs))).await?;
    Ok(Json(result))
}

async fn sweep(Json(req): Json<SweepRequest>) -> ApiResult<Json<BatchResult>> {
    let cfg: ExperimentConfig = parse_config(&req.config)?;
    let schedulers = kinds(req.schedulers.as_deref(), &cfg.experiment.schedulers)?;
    let seeds = req.seeds.unwrap_or_else(|| cfg.experiment.seeds.clone());
    let users = req.users.unwrap_or_else(|| cfg.experiment.users.clone());
    let jobs = jobs(req.jobs);
    let result = blocking(move || Ok(experiment::sweep(&cfg, &users, &schedulers, &seeds, jobs))).await?;
    Ok(Json(result))
}

fn info(id: u64, runner: &Runner) -> SessionInfo {
    SessionInfo {
        id,
        scheduler: runner.kind().name().into(),
        seed: runner.seed(),
        interval: runner.state().interval_index(),
        horizon: runner.horizon(),
        finished: runner.is_finished(),
        report: runner.report().clone(),
    }
}

async fn create_session(
    State(app): State<AppState>,
    Json(req): Json<SessionRequest>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let cfg = parse_config(&req.config)?;
    let kind = kind(&req.scheduler)?;
    let runner = blocking(move || {
        Runner::new(&cfg.scenario(), kind, req.seed).map_err(|e| AppError::unprocessable(e.to_string()))
    })
    .await?;
    let id = app.sessions.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    let body = info(id, &runner);
    app.sessions
        .runs
        .lock()
        .expect("session map lock")
        .insert(id, Arc::new(Mutex::new(runner)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn session_info(State(app): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<SessionInfo>> {
    let runner = app.sessions.get(id)?;
    let runner = runner.lock().expect("session lock");
    Ok(Json(info(id, &runner)))
}

async fn step_session(
    State(app): State<AppState>,
    Path(id): Path<u64>,
    body: Option<Json<StepRequest>>,
) -> ApiResult<Json<StepResponse>> {
    let intervals = body.map_or(1, |Json(r)| r.intervals);
    let runner = app.sessions.get(id)?;
    let response = blocking(move || {
        let mut runner = runner.lock().expect("session lock");
        let mut steps = Vec::new();
        for _ in 0..intervals {
            match runner.step() {
                Ok(Some(s)) => steps.push(s),
                Ok(None) => break,
                Err(e) => return Err(AppError::unprocessable(e.to_string())),
            }
        }
        Ok(StepResponse {
            steps,
            finished: runner.is_finished(),
        })
    })
    .await?;
    Ok(Json(response))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    app.sessions
        .runs
        .lock()
        .expect("session map lock")
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| AppError::not_found(format!("no session {id}")))
}
