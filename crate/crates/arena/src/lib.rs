//! HTTP service for the model comparison dashboard.
//!
//! Endpoints:
//! - `GET /api/info`: models, column schema, row count, chart kinds
//! - `GET /api/charts`: chart kinds with their parameters
//! - `POST /api/compute`: one explanation for one model
//! - `GET /api/state`, `PUT /api/state`: save and restore the dashboard
//!
//! Everything else is served from the UI directory when one is configured.

mod state;

pub use state::{ArenaState, ChartDescriptor, PinnedObservation, STATE_VERSION};

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use exposition::{ExplainError, Explainer, MethodKind, MethodParams};
use serde::Deserialize;
use serde_json::{json, Value as Json};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

/// Header telling whether a compute response came from the cache.
pub const CACHE_HEADER: &str = "x-exposition-cache";

/// Registered models plus the computed-explanation cache and dashboard state.
pub struct Session {
    explainers: Vec<Arc<Explainer>>,
    cache: RwLock<HashMap<String, Arc<Vec<u8>>>>,
    state: RwLock<ArenaState>,
    hits: AtomicU64,
}

impl Session {
    /// All explainers must share one dataset layout and have distinct labels.
    pub fn new(explainers: Vec<Explainer>) -> Result<Self, ExplainError> {
        let first = explainers
            .first()
            .ok_or_else(|| ExplainError::Schema("at least one model is required".into()))?;
        for (i, e) in explainers.iter().enumerate() {
            if explainers[..i].iter().any(|o| o.label() == e.label()) {
                return Err(ExplainError::Schema(format!("duplicate model label '{}'", e.label())));
            }
            if e.features().schema() != first.features().schema() || e.target() != first.target() {
                return Err(ExplainError::Schema(format!(
                    "model '{}' is bound to different data than '{}'",
                    e.label(),
                    first.label()
                )));
            }
        }
        Ok(Session {
            explainers: explainers.into_iter().map(Arc::new).collect(),
            cache: RwLock::new(HashMap::new()),
            state: RwLock::new(ArenaState::default()),
            hits: AtomicU64::new(0),
        })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.explainers.iter().map(|e| e.label()).collect()
    }

    pub fn explainer(&self, label: &str) -> Option<&Arc<Explainer>> {
        self.explainers.iter().find(|e| e.label() == label)
    }

    pub fn n_rows(&self) -> usize {
        self.explainers[0].features().n_rows()
    }

    pub fn cache_hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn state(&self) -> ArenaState {
        self.state.read().unwrap().clone()
    }

    /// Replaces the dashboard state after checking every reference.
    pub fn load_state(&self, state: ArenaState) -> Result<(), Vec<String>> {
        let unresolved = state.unresolved(&self.labels(), self.n_rows());
        if !unresolved.is_empty() {
            return Err(unresolved);
        }
        *self.state.write().unwrap() = state;
        Ok(())
    }

    /// Computes (or fetches from cache) the serialized explanation.
    ///
    /// Returns the payload and whether it was a cache hit.
    pub fn compute(&self, request: &ComputeRequest) -> Result<(Arc<Vec<u8>>, bool), ComputeError> {
        let explainer = self
            .explainer(&request.model)
            .ok_or_else(|| ComputeError::UnknownModel(request.model.clone()))?;
        let kind: MethodKind = request.kind.parse().map_err(ComputeError::Explain)?;
        let seed = request.seed.unwrap_or_else(|| explainer.seed());
        let key = json!({
            "model": request.model,
            "kind": kind,
            "params": request.params,
            "seed": seed,
        })
        .to_string();
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((Arc::clone(hit), true));
        }
        let payload = exposition::run(explainer, kind, &request.params, seed).map_err(ComputeError::Explain)?;
        let bytes = Arc::new(payload.to_json_bytes());
        // concurrent identical requests produce identical bytes, so either may win
        self.cache.write().unwrap().insert(key, Arc::clone(&bytes));
        Ok((bytes, false))
    }

    fn info(&self) -> Json {
        let e = &self.explainers[0];
        let schema: Vec<Json> = e
            .features()
            .schema()
            .iter()
            .map(|s| {
                let mut col = json!({"name": s.name, "kind": s.kind});
                if !s.levels.is_empty() {
                    col["levels"] = json!(s.levels);
                }
                col
            })
            .collect();
        let tasks: BTreeMap<&str, &str> = self.explainers.iter().map(|e| (e.label(), e.task().as_str())).collect();
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "state_version": STATE_VERSION,
            "models": self.labels(),
            "tasks": tasks,
            "target": e.data().target(),
            "schema": schema,
            "n_rows": self.n_rows(),
            "charts": chart_catalog(),
        })
    }
}

/// Body of `POST /api/compute`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeRequest {
    pub kind: String,
    pub model: String,
    #[serde(default)]
    pub params: MethodParams,
    /// Defaults to the seed the model was registered with.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum ComputeError {
    UnknownModel(String),
    Explain(ExplainError),
}

fn chart_type(kind: MethodKind) -> &'static str {
    match kind {
        MethodKind::Performance => "performance",
        MethodKind::Breakdown => "breakdown",
        MethodKind::Shapley => "shapley",
        MethodKind::Cp => "cp_profile",
        MethodKind::Importance => "importance",
        MethodKind::Profile => "profile",
        MethodKind::Residuals => "residuals",
        MethodKind::Surrogate => "tree",
        MethodKind::Fairness => "fairness_check",
    }
}

fn chart_catalog() -> Json {
    MethodKind::ALL
        .iter()
        .map(|k| {
            json!({
                "kind": k,
                "chart_type": chart_type(*k),
                "predict_level": k.is_predict_level(),
                "required": k.required_params(),
                "optional": k.optional_params(),
            })
        })
        .collect()
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response()
}

fn error_response(status: StatusCode, body: Json) -> Response {
    json_response(status, body.to_string().into_bytes())
}

/// 422 for problems with the request or data, 500 for predictor failures.
fn explain_error_response(err: &ExplainError) -> Response {
    let status = match err {
        ExplainError::Parameter { .. }
        | ExplainError::Level { .. }
        | ExplainError::Schema(_)
        | ExplainError::Parse(_)
        | ExplainError::MissingValue { .. }
        | ExplainError::DegenerateTarget(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let mut fields = serde_json::Map::new();
    if let Some(f) = err.field() {
        fields.insert(f.to_string(), json!(err.to_string()));
    }
    error_response(status, json!({"error": err.to_string(), "fields": fields}))
}

async fn info(State(session): State<Arc<Session>>) -> Response {
    error_response(StatusCode::OK, session.info())
}

async fn charts() -> Response {
    error_response(StatusCode::OK, chart_catalog())
}

async fn compute(State(session): State<Arc<Session>>, body: Bytes) -> Response {
    let request: ComputeRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return error_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": format!("invalid request: {e}"), "fields": {"body": e.to_string()}}),
            )
        }
    };
    let worker = Arc::clone(&session);
    let outcome = tokio::task::spawn_blocking(move || worker.compute(&request)).await;
    match outcome {
        Ok(Ok((bytes, hit))) => {
            let mut resp = json_response(StatusCode::OK, bytes.as_ref().clone());
            resp.headers_mut()
                .insert(CACHE_HEADER, HeaderValue::from_static(if hit { "hit" } else { "miss" }));
            resp
        }
        Ok(Err(ComputeError::UnknownModel(m))) => error_response(
            StatusCode::NOT_FOUND,
            json!({"error": format!("unknown model '{m}'"), "fields": {"model": format!("'{m}' is not registered")}}),
        ),
        Ok(Err(ComputeError::Explain(e))) => {
            tracing::debug!(error = %e, "compute failed");
            explain_error_response(&e)
        }
        Err(join) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({"error": format!("computation aborted: {join}")}),
        ),
    }
}

async fn get_state(State(session): State<Arc<Session>>) -> Response {
    error_response(StatusCode::OK, json!(session.state()))
}

async fn put_state(State(session): State<Arc<Session>>, body: Bytes) -> Response {
    let state: ArenaState = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => {
            return error_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": format!("invalid state document: {e}")}),
            )
        }
    };
    match session.load_state(state) {
        Ok(()) => error_response(StatusCode::OK, json!(session.state())),
        Err(unresolved) => error_response(
            StatusCode::CONFLICT,
            json!({"error": "state references unknown models or rows", "unresolved": unresolved}),
        ),
    }
}

const PLACEHOLDER: &str = "<!doctype html><title>exposition arena</title>\
<p>The dashboard UI is not installed. The API is available under <code>/api/</code>: \
<code>info</code>, <code>charts</code>, <code>compute</code>, <code>state</code>.</p>";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

/// Builds the service. `ui_dir`, when given, is served at `/`.
pub fn router(session: Arc<Session>, ui_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST, Method::PUT])
        .allow_headers(Any);
    let api = Router::new()
        .route("/api/info", get(info))
        .route("/api/charts", get(charts))
        .route("/api/compute", axum::routing::post(compute))
        .route("/api/state", get(get_state).put(put_state))
        .with_state(session);
    let app = match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    };
    app.layer(cors)
}

/// Serves `router` on an already bound listener until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
