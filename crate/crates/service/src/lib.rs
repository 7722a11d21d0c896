//! Online recommendation service. Artifacts are loaded once at startup and
//! shared read-only; each query returns generated titles and the most
//! similar stored questions.
//!
//! Request handling is plain functions over [`ServiceState`] returning a
//! status and a JSON body, so the HTTP layer and the command line produce
//! the same bytes.

mod json;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use titlegen_core::corpus::preprocess_code;
use titlegen_core::inference::{generate, BeamConfig};
use titlegen_core::model::Checkpoint;
use titlegen_core::retrieval::{embed_snippet, SearchIndex};

pub use json::{error_body, health_body, query_body, GeneratedItem, RetrievedItem};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 1 << 20;
/// Longest accepted snippet after preprocessing.
pub const MAX_CODE_TOKENS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    pub beam: BeamConfig,
    /// Retrieved questions per query.
    pub k: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            beam: BeamConfig::default(),
            k: 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot load model {path}: {source}")]
    Model {
        path: PathBuf,
        source: titlegen_core::Error,
    },
    #[error("cannot load index {path}: {source}")]
    Index {
        path: PathBuf,
        source: titlegen_core::Error,
    },
    #[error("index dimension {index} does not match model embedding dimension {model}")]
    Mismatch { index: usize, model: usize },
    #[error("invalid service configuration: {0}")]
    Config(titlegen_core::Error),
}

/// Everything a request needs, immutable after [`load_artifacts`] apart
/// from the counters.
#[derive(Debug)]
pub struct ServiceState {
    pub checkpoint: Checkpoint,
    pub index: SearchIndex,
    pub config: ServiceConfig,
    /// First 12 hex digits of the SHA-256 of the serialized checkpoint.
    pub model_version: String,
    started: Instant,
    requests: AtomicU64,
    busy_micros: AtomicU64,
}

impl ServiceState {
    pub fn new(checkpoint: Checkpoint, index: SearchIndex, config: ServiceConfig) -> Result<Self, LoadError> {
        config.beam.validate().map_err(LoadError::Config)?;
        if config.k == 0 {
            return Err(LoadError::Config(titlegen_core::Error::InvalidArgument(
                "k must be at least 1".into(),
            )));
        }
        let model = checkpoint.config.annotation_dim();
        if index.emb.dim() != model {
            return Err(LoadError::Mismatch {
                index: index.emb.dim(),
                model,
            });
        }
        let digest = Sha256::digest(checkpoint.to_bytes());
        let model_version = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        Ok(ServiceState {
            checkpoint,
            index,
            config,
            model_version,
            started: Instant::now(),
            requests: AtomicU64::new(0),
            busy_micros: AtomicU64::new(0),
        })
    }

    /// Queries answered so far.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Total time spent answering queries, in microseconds.
    pub fn busy_micros(&self) -> u64 {
        self.busy_micros.load(Ordering::Relaxed)
    }

    pub fn uptime_seconds(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }
}

/// Reads the checkpoint and index once.
pub fn load_artifacts(model: &Path, index: &Path, config: ServiceConfig) -> Result<ServiceState, LoadError> {
    let checkpoint = Checkpoint::load(model).map_err(|source| LoadError::Model {
        path: model.to_path_buf(),
        source,
    })?;
    let idx = SearchIndex::load(index).map_err(|source| LoadError::Index {
        path: index.to_path_buf(),
        source,
    })?;
    ServiceState::new(checkpoint, idx, config)
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct QueryRequest {
    pub code: String,
    #[serde(default)]
    pub language: Option<String>,
}

/// A status code and the exact JSON body to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn error(status: u16, code: &str, message: &str) -> Self {
        Reply {
            status,
            body: error_body(code, message),
        }
    }
}

/// Generates titles and retrieves similar questions for one snippet.
pub fn handle_query(state: &ServiceState, req: &QueryRequest) -> Reply {
    let t0 = Instant::now();
    let reply = answer(state, req);
    state.requests.fetch_add(1, Ordering::Relaxed);
    state
        .busy_micros
        .fetch_add(t0.elapsed().as_micros() as u64, Ordering::Relaxed);
    reply
}

fn answer(state: &ServiceState, req: &QueryRequest) -> Reply {
    let code = preprocess_code(&req.code);
    if code.is_empty() {
        return Reply::error(400, "empty_input", "code is empty after preprocessing");
    }
    if code.len() > MAX_CODE_TOKENS {
        return Reply::error(
            400,
            "too_long",
            &format!("code has {} tokens; the limit is {MAX_CODE_TOKENS}", code.len()),
        );
    }
    let ck = &state.checkpoint;
    let titles = match generate(ck, &code, &state.config.beam) {
        Ok(t) => t,
        Err(e) => return Reply::error(500, "model_error", &e.to_string()),
    };
    let query = match embed_snippet(ck, &code) {
        Ok(v) => v.iter().map(|&x| x as f32).collect::<Vec<f32>>(),
        Err(e) => return Reply::error(500, "model_error", &e.to_string()),
    };
    let generated: Vec<GeneratedItem> = titles
        .iter()
        .map(|g| GeneratedItem {
            title: g.title.to_string(),
            score: g.score,
        })
        .collect();
    let retrieved: Vec<RetrievedItem> = state
        .index
        .search(&query, state.config.k)
        .into_iter()
        .map(|h| {
            let m = state.index.emb.meta(h.row);
            RetrievedItem {
                title: m.title.clone(),
                url: m.url.clone(),
                score: h.cosine,
            }
        })
        .collect();
    Reply {
        status: 200,
        body: query_body(&generated, &retrieved),
    }
}

/// Parses a raw request body and answers it.
pub fn handle_query_bytes(state: &ServiceState, body: &[u8]) -> Reply {
    if body.len() > MAX_BODY_BYTES {
        return Reply::error(413, "too_large", "request body exceeds 1 MiB");
    }
    match serde_json::from_slice::<QueryRequest>(body) {
        Ok(req) => handle_query(state, &req),
        Err(e) => Reply::error(400, "invalid_request", &e.to_string()),
    }
}

pub fn handle_health(state: &ServiceState) -> Reply {
    Reply {
        status: 200,
        body: health_body(
            "ok",
            &state.model_version,
            state.index.len(),
            state.uptime_seconds(),
        ),
    }
}

fn to_response(reply: Reply) -> Response {
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], reply.body).into_response()
}

async fn query_route(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let reply = tokio::task::spawn_blocking(move || handle_query_bytes(&state, &body))
        .await
        .unwrap_or_else(|e| Reply::error(500, "model_error", &e.to_string()));
    to_response(reply)
}

async fn health_route(State(state): State<Arc<ServiceState>>) -> Response {
    to_response(handle_health(&state))
}

/// The JSON API routes. Any other path falls through to `static_dir` when
/// it is given and present.
pub fn router(state: Arc<ServiceState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/query", post(query_route))
        .route("/api/health", get(health_route))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match static_dir.filter(|d| d.is_dir()) {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let app = router(state, static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}
