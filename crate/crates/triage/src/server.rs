use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::error::{Result, TriageError};
use crate::state::{StatusFilter, TriageState};
use crate::store::LabelStore;
use crate::types::{read_queue, HumanLabel, LabelRequest, LiveMetrics};

const PLACEHOLDER: &str = "<!doctype html><title>triage</title>\
<p>The review UI is not built. The API lives under <code>/api/</code>: \
<code>queue</code>, <code>docs/{id}</code>, <code>labels</code>, <code>metrics</code>.</p>";

/// Shared service state: many readers, one label writer at a time.
#[derive(Debug)]
pub struct AppState {
    state: RwLock<TriageState>,
    store: Mutex<LabelStore>,
}

impl AppState {
    /// Loads the queue and replays the label store. A store record that does
    /// not fit the queue is reported with its line number.
    pub fn open(queue: &Path, labels: &Path) -> Result<Arc<Self>> {
        let mut state = TriageState::new(read_queue(queue)?)?;
        let (store, replayed) = LabelStore::open(labels)?;
        for (line, label) in replayed {
            state.apply(label).map_err(|e| TriageError::Corrupt {
                path: labels.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
        }
        Ok(Arc::new(Self {
            state: RwLock::new(state),
            store: Mutex::new(store),
        }))
    }

    pub fn snapshot(&self) -> TriageState {
        self.state.read().expect("state lock poisoned").clone()
    }

    pub fn metrics(&self) -> LiveMetrics {
        self.state.read().expect("state lock poisoned").metrics()
    }

    /// Validates, persists, then applies one label. The label is on disk
    /// before this returns.
    pub fn submit(&self, req: LabelRequest) -> Result<LiveMetrics> {
        if req.reviewer.trim().is_empty() {
            return Err(TriageError::BadRequest("reviewer must not be empty".into()));
        }
        let mut store = self.store.lock().expect("store lock poisoned");
        self.state.read().expect("state lock poisoned").check(&req.instance_id, req.label)?;
        let label = HumanLabel {
            instance_id: req.instance_id,
            label: req.label,
            reviewer: req.reviewer,
            timestamp: Utc::now(),
        };
        store.append(&label)?;
        let mut state = self.state.write().expect("state lock poisoned");
        state.apply(label)?;
        Ok(state.metrics())
    }
}

impl IntoResponse for TriageError {
    fn into_response(self) -> Response {
        let status = match &self {
            TriageError::UnknownInstance(_) => StatusCode::NOT_FOUND,
            TriageError::Duplicate(_) => StatusCode::CONFLICT,
            TriageError::InvalidLabel { .. } | TriageError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    limit: Option<usize>,
    status: Option<String>,
}

async fn get_queue(State(app): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> Result<Response> {
    let status = q.status.as_deref().map(str::parse).transpose()?.unwrap_or(StatusFilter::Pending);
    let items = app.state.read().expect("state lock poisoned").queue(status, q.limit);
    Ok(Json(items).into_response())
}

async fn get_doc(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    let doc = app.state.read().expect("state lock poisoned").doc(&id);
    doc.map(|d| Json(d).into_response()).ok_or(TriageError::UnknownInstance(id))
}

async fn post_label(State(app): State<Arc<AppState>>, Json(req): Json<LabelRequest>) -> Result<Response> {
    let metrics = tokio::task::spawn_blocking(move || app.submit(req))
        .await
        .map_err(|e| TriageError::io("<label store>", std::io::Error::other(e)))??;
    Ok((StatusCode::CREATED, Json(metrics)).into_response())
}

async fn get_metrics(State(app): State<Arc<AppState>>) -> Json<LiveMetrics> {
    Json(app.metrics())
}

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

/// API routes, plus the static UI bundle at `/` when `ui_dir` exists.
pub fn router(app: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/docs/{id}", get(get_doc))
        .route("/api/labels", axum::routing::post(post_label))
        .route("/api/metrics", get(get_metrics))
        .with_state(app);
    match ui_dir.filter(|d| d.join("index.html").is_file()) {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub queue: PathBuf,
    pub labels: PathBuf,
    pub addr: String,
    pub ui_dir: Option<PathBuf>,
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let app = AppState::open(&config.queue, &config.labels)?;
    let listener = tokio::net::TcpListener::bind(&config.addr).await.map_err(|e| TriageError::Bind {
        addr: config.addr.clone(),
        source: e,
    })?;
    let local: SocketAddr = listener.local_addr().map_err(|e| TriageError::Bind {
        addr: config.addr.clone(),
        source: e,
    })?;
    log::info!("serving {} items on http://{local}", app.metrics().total);
    let routes = router(app, config.ui_dir.as_deref());
    axum::serve(listener, routes)
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
        .map_err(|e| TriageError::io("<server>", e))
}
