//! HTTP service exposing the pipeline and retrieval internals.
//!
//! Endpoints:
//! - `GET  /healthz` — 200 once the graph and index are loaded, 503 before.
//! - `POST /v1/answer` `{"question"}` — full pipeline; `{"answer","trace_id"}`.
//! - `POST /v1/retrieve` `{"question"}` — retrieval stages only (no reader
//!   call); pruned chains and anchors.
//! - `GET  /v1/trace/{id}` — a stored trace by id.
//!
//! Malformed bodies get 422; provider failures get 502 with the failing
//! stage named in the body. Traces live in a bounded in-memory ring with an
//! optional JSONL spill file.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use hykge_core::pipeline::{run, run_retrieval, PipelineTrace};

use crate::state::LoadedState;

pub struct ServiceState {
    inner: Arc<Inner>,
}

impl Clone for ServiceState {
    fn clone(&self) -> Self {
        ServiceState {
            inner: self.inner.clone(),
        }
    }
}

struct Inner {
    loaded: RwLock<Option<Arc<LoadedState>>>,
    traces: Mutex<TraceStore>,
    next_id: AtomicU64,
}

impl ServiceState {
    pub fn new(ring_capacity: usize, spill_path: Option<std::path::PathBuf>) -> Self {
        ServiceState {
            inner: Arc::new(Inner {
                loaded: RwLock::new(None),
                traces: Mutex::new(TraceStore {
                    ring: VecDeque::new(),
                    capacity: ring_capacity.max(1),
                    spill_path,
                }),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    pub fn set_loaded(&self, state: LoadedState) {
        *self.inner.loaded.write().expect("state lock") = Some(Arc::new(state));
    }

    fn loaded(&self) -> Option<Arc<LoadedState>> {
        self.inner.loaded.read().expect("state lock").clone()
    }

    fn store_trace(&self, trace: PipelineTrace) -> u64 {
        let id = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        let mut store = self.inner.traces.lock().expect("trace lock");
        store.push(id, trace);
        id
    }

    fn trace(&self, id: u64) -> Option<PipelineTrace> {
        let store = self.inner.traces.lock().expect("trace lock");
        store
            .ring
            .iter()
            .find(|(tid, _)| *tid == id)
            .map(|(_, t)| t.clone())
    }
}

struct TraceStore {
    ring: VecDeque<(u64, PipelineTrace)>,
    capacity: usize,
    spill_path: Option<std::path::PathBuf>,
}

impl TraceStore {
    fn push(&mut self, id: u64, trace: PipelineTrace) {
        if let Some(path) = &self.spill_path {
            if let Ok(line) = serde_json::to_string(&SpilledTrace { id, trace: &trace }) {
                let _ = append_line(path, &line);
            }
        }
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back((id, trace));
    }
}

#[derive(Serialize)]
struct SpilledTrace<'a> {
    id: u64,
    trace: &'a PipelineTrace,
}

fn append_line(path: &std::path::Path, line: &str) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(f, "{line}")
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/answer", post(answer))
        .route("/v1/retrieve", post(retrieve))
        .route("/v1/trace/{id}", get(trace_by_id))
        .with_state(state)
}

#[derive(Deserialize)]
struct Question {
    question: String,
}

#[derive(Serialize)]
struct AnswerResponse {
    answer: String,
    trace_id: String,
}

#[derive(Serialize)]
struct RetrieveResponse {
    chains: Vec<RetrievedChain>,
    anchors: Vec<RetrievedAnchor>,
}

#[derive(Serialize)]
struct RetrievedChain {
    text: String,
    score: f64,
    kind: hykge_core::chains::ChainKind,
    hops: usize,
}

#[derive(Serialize)]
struct RetrievedAnchor {
    entity_id: u32,
    name: String,
    mention: String,
    similarity: f64,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<String>,
}

enum ApiError {
    NotReady,
    BadBody(String),
    Pipeline(hykge_core::pipeline::PipelineError),
    NotFound,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotReady => (
                StatusCode::SERVICE_UNAVAILABLE,
                ErrorBody {
                    error: "graph and index not loaded yet".to_string(),
                    stage: None,
                },
            ),
            ApiError::BadBody(message) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorBody {
                    error: message,
                    stage: None,
                },
            ),
            ApiError::Pipeline(e) => (
                StatusCode::BAD_GATEWAY,
                ErrorBody {
                    stage: e.stage_name().map(|s| s.to_string()),
                    error: e.to_string(),
                },
            ),
            ApiError::NotFound => (
                StatusCode::NOT_FOUND,
                ErrorBody {
                    error: "no such trace".to_string(),
                    stage: None,
                },
            ),
            ApiError::Internal(message) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorBody {
                    error: message,
                    stage: None,
                },
            ),
        };
        (status, axum::Json(body)).into_response()
    }
}

async fn healthz(State(state): State<ServiceState>) -> Response {
    if state.loaded().is_some() {
        (StatusCode::OK, "ok").into_response()
    } else {
        ApiError::NotReady.into_response()
    }
}

fn parse_question(
    body: Result<axum::Json<Question>, JsonRejection>,
) -> Result<String, ApiError> {
    let axum::Json(q) = body.map_err(|e| ApiError::BadBody(e.body_text()))?;
    if q.question.trim().is_empty() {
        return Err(ApiError::BadBody("question must not be empty".to_string()));
    }
    Ok(q.question)
}

async fn answer(
    State(state): State<ServiceState>,
    body: Result<axum::Json<Question>, JsonRejection>,
) -> Result<Response, ApiError> {
    let question = parse_question(body)?;
    let loaded = state.loaded().ok_or(ApiError::NotReady)?;
    let trace = tokio::task::spawn_blocking(move || {
        let cfg = loaded.pipeline.clone();
        run(&question, &cfg, &loaded.deps())
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(ApiError::Pipeline)?;

    let answer = trace.answer.clone();
    let trace_id = state.store_trace(trace);
    Ok(axum::Json(AnswerResponse {
        answer,
        trace_id: trace_id.to_string(),
    })
    .into_response())
}

async fn retrieve(
    State(state): State<ServiceState>,
    body: Result<axum::Json<Question>, JsonRejection>,
) -> Result<Response, ApiError> {
    let question = parse_question(body)?;
    let loaded = state.loaded().ok_or(ApiError::NotReady)?;
    let trace = tokio::task::spawn_blocking(move || {
        let cfg = loaded.pipeline.clone();
        run_retrieval(&question, &cfg, &loaded.deps())
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(ApiError::Pipeline)?;

    Ok(axum::Json(RetrieveResponse {
        chains: trace
            .pruned_chains
            .iter()
            .map(|c| RetrievedChain {
                text: c.text.clone(),
                score: c.score,
                kind: c.kind,
                hops: c.hops,
            })
            .collect(),
        anchors: trace
            .anchors
            .iter()
            .map(|a| RetrievedAnchor {
                entity_id: a.entity_id,
                name: a.name.clone(),
                mention: a.mention.clone(),
                similarity: a.similarity,
            })
            .collect(),
    })
    .into_response())
}

async fn trace_by_id(
    State(state): State<ServiceState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    if state.loaded().is_none() {
        return Err(ApiError::NotReady);
    }
    let id: u64 = id.parse().map_err(|_| ApiError::NotFound)?;
    let trace = state.trace(id).ok_or(ApiError::NotFound)?;
    Ok(axum::Json(trace).into_response())
}

/// Bind and serve until the process is interrupted.
pub async fn serve(state: ServiceState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
