//! HTTP surface: `GET /search`, `GET /health`, `POST /reload`.

use std::sync::Arc;
use std::time::Instant;

use arc_swap::ArcSwap;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use shelf_core::engine::EngineError;
use shelf_core::{EngineConfig, EngineSnapshot, Sources};

/// Largest page size a client may ask for.
pub const MAX_K: usize = 1000;

pub struct AppState {
    snapshot: ArcSwap<EngineSnapshot>,
    sources: Sources,
    config: EngineConfig,
    started: Instant,
    /// Serializes reloads; readers never take it.
    reloading: Mutex<()>,
}

impl AppState {
    pub fn new(snapshot: EngineSnapshot, sources: Sources, config: EngineConfig) -> Self {
        AppState {
            snapshot: ArcSwap::from_pointee(snapshot),
            sources,
            config,
            started: Instant::now(),
            reloading: Mutex::new(()),
        }
    }

    /// Builds the first snapshot (version 1) from `sources`.
    pub fn load(sources: Sources, config: EngineConfig) -> Result<Self, EngineError> {
        let snapshot = EngineSnapshot::load(&sources, config.clone(), 1)?;
        Ok(AppState::new(snapshot, sources, config))
    }

    pub fn snapshot(&self) -> Arc<EngineSnapshot> {
        self.snapshot.load_full()
    }

    /// Rebuilds from the sources and swaps the result in. On error the
    /// current snapshot keeps serving.
    pub async fn reload(&self) -> Result<u64, EngineError> {
        let _guard = self.reloading.lock().await;
        let version = self.snapshot.load().version + 1;
        let sources = self.sources.clone();
        let config = self.config.clone();
        let built = tokio::task::spawn_blocking(move || EngineSnapshot::load(&sources, config, version))
            .await
            .expect("snapshot build does not panic")?;
        self.snapshot.store(Arc::new(built));
        Ok(version)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/search", get(search))
        .route("/health", get(health))
        .route("/reload", post(reload))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct SearchParams {
    q: Option<String>,
    k: Option<String>,
    /// Reserved; results are not personalized.
    #[allow(dead_code)]
    profile: Option<String>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

/// `outer: inner: innermost`.
pub fn error_chain(e: &(dyn std::error::Error + 'static)) -> String {
    std::iter::successors(Some(e), |e| e.source()).map(ToString::to_string).collect::<Vec<_>>().join(": ")
}

async fn search(State(state): State<Arc<AppState>>, Query(params): Query<SearchParams>) -> Response {
    let Some(q) = params.q else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter q");
    };
    let snapshot = state.snapshot();
    let k = match params.k.as_deref() {
        None => snapshot.config.default_k,
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if (1..=MAX_K).contains(&k) => k,
            _ => return error(StatusCode::BAD_REQUEST, format!("k must be an integer in 1..={MAX_K}")),
        },
    };
    Json(snapshot.handle_search(&q, k)).into_response()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    pub videos: usize,
    pub talents: usize,
    pub collections: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: u64,
    pub entities: EntityCounts,
    pub uptime_s: f64,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let snapshot = state.snapshot();
    let catalog = &snapshot.catalog;
    Json(Health {
        status: "ok".into(),
        version: snapshot.version,
        entities: EntityCounts {
            videos: catalog.video_count(),
            talents: catalog.talent_count(),
            collections: catalog.collection_count(),
            total: catalog.len(),
        },
        uptime_s: state.started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Reloaded {
    pub version: u64,
}

async fn reload(State(state): State<Arc<AppState>>) -> Response {
    match state.reload().await {
        Ok(version) => {
            tracing::info!(version, "snapshot reloaded");
            Json(Reloaded { version }).into_response()
        }
        Err(e) => {
            let message = error_chain(&e);
            tracing::warn!(error = %message, "reload failed; keeping current snapshot");
            error(StatusCode::UNPROCESSABLE_ENTITY, message)
        }
    }
}
