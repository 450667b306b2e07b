use std::cell::RefCell;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use anyhow::anyhow;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use graphex::model_file::FORMAT_VERSION;
use graphex::{Alignment, CategoryId, InferenceError, Model, Prediction, RecommendOptions, Recommender, Scratch};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::output::predictions_json;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub model: PathBuf,
    pub bind: SocketAddr,
    pub max_body_bytes: usize,
    pub settings: ServeSettings,
}

/// Per-request behaviour that does not depend on how the server is bound.
#[derive(Debug, Clone, Copy)]
pub struct ServeSettings {
    pub options: RecommendOptions,
    pub timeout: Duration,
    pub unknown_leaf_empty: bool,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self { options: RecommendOptions::default(), timeout: Duration::from_secs(1), unknown_leaf_empty: false }
    }
}

/// Shared handler state. The model slot is empty until loading finishes.
#[derive(Clone)]
pub struct AppState {
    model: Arc<OnceLock<Arc<Model>>>,
    settings: ServeSettings,
}

impl AppState {
    pub fn new(settings: ServeSettings) -> Self {
        Self { model: Arc::new(OnceLock::new()), settings }
    }

    /// Install the model. Later calls are ignored.
    pub fn set_model(&self, model: Model) {
        let _ = self.model.set(Arc::new(model));
    }

    pub fn is_ready(&self) -> bool {
        self.model.get().is_some()
    }
}

#[derive(Debug, Deserialize)]
struct RecommendRequest {
    title: String,
    leaf_category: CategoryId,
    k: Option<usize>,
    align: Option<Alignment>,
}

pub fn router(state: AppState, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/recommend", post(recommend))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, message: impl std::fmt::Display) -> Response {
    json_response(status, serde_json::json!({ "error": message.to_string() }).to_string())
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::new());
}

async fn recommend(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.model.get().cloned() else {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, "model is loading");
    };
    let req: RecommendRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let mut options = state.settings.options;
    if let Some(k) = req.k {
        options.k = k;
    }
    if let Some(a) = req.align {
        options.align = a;
    }
    if options.k == 0 {
        return error_response(StatusCode::BAD_REQUEST, InferenceError::InvalidK);
    }

    let work = tokio::task::spawn_blocking(move || -> Result<Vec<Prediction>, InferenceError> {
        let rec = Recommender::new(&model);
        SCRATCH.with(|s| rec.recommend_with(&req.title, req.leaf_category, &options, &mut s.borrow_mut()))
    });
    match tokio::time::timeout(state.settings.timeout, work).await {
        Ok(Ok(Ok(preds))) => json_response(StatusCode::OK, predictions_json(&preds)),
        Ok(Ok(Err(e @ InferenceError::UnknownLeaf(_)))) => {
            if state.settings.unknown_leaf_empty {
                json_response(StatusCode::OK, "[]".into())
            } else {
                error_response(StatusCode::NOT_FOUND, e)
            }
        }
        Ok(Ok(Err(e))) => error_response(StatusCode::BAD_REQUEST, e),
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(_) => error_response(StatusCode::GATEWAY_TIMEOUT, "request timed out"),
    }
}

async fn healthz(State(state): State<AppState>) -> Response {
    let Some(model) = state.model.get() else {
        return json_response(StatusCode::SERVICE_UNAVAILABLE, r#"{"status":"loading"}"#.into());
    };
    let body = serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "meta_category": model.meta_category(),
        "leaves": model.num_leaves(),
        "keyphrases": model.num_keyphrases(),
    });
    json_response(StatusCode::OK, body.to_string())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Serve on an already bound listener. The model is loaded in the
/// background; requests get 503 until it is ready. A load failure stops
/// the server and is returned.
pub async fn serve_on(listener: TcpListener, config: ServeConfig) -> Result<(), CliError> {
    let state = AppState::new(config.settings);
    let app = router(state.clone(), config.max_body_bytes);

    let (fail_tx, fail_rx) = oneshot::channel::<anyhow::Error>();
    let path = config.model.clone();
    let loader = state.clone();
    tokio::task::spawn_blocking(move || match graphex::load(&path) {
        Ok(model) => {
            log::info!("model ready: {} leaves, {} keyphrases", model.num_leaves(), model.num_keyphrases());
            loader.set_model(model);
        }
        Err(e) => {
            let _ = fail_tx.send(anyhow!(e).context(format!("loading {}", path.display())));
        }
    });

    let failure: Arc<Mutex<Option<anyhow::Error>>> = Arc::default();
    let slot = failure.clone();
    let shutdown = async move {
        tokio::select! {
            _ = shutdown_signal() => log::info!("shutting down"),
            Ok(e) = fail_rx => {
                *slot.lock().unwrap() = Some(e);
            }
        }
    };
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await.map_err(anyhow::Error::from)?;

    let failed = failure.lock().unwrap().take();
    match failed {
        Some(e) => Err(CliError::Runtime(e)),
        None => Ok(()),
    }
}

pub async fn serve(config: ServeConfig) -> Result<(), CliError> {
    if !config.model.exists() {
        return Err(CliError::Usage(format!("input not found: {}", config.model.display())));
    }
    let listener = TcpListener::bind(config.bind).await.map_err(|e| anyhow!(e).context(format!("binding {}", config.bind)))?;
    log::info!("listening on {}", listener.local_addr().map_err(anyhow::Error::from)?);
    serve_on(listener, config).await
}
