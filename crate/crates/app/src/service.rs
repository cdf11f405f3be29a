//! HTTP JSON API over a loaded [`Session`].
//!
//! Every handler is a plain function from the session and raw request parts
//! to a [`Reply`], so the API can be exercised without a socket; [`router`]
//! only wires them into axum.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use binflip::context::{Condition, InstanceSummary, SummaryError};
use binflip::counterfactual::{CounterfactualResult, SearchError};
use binflip::model::{Class, CorrectnessLabel, Metrics, PredictError};
use binflip::SearchStatus;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::session::{Session, SessionError};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 8571;
const DEFAULT_PAGE: usize = 100;
const MAX_PAGE: usize = 1000;

/// Probability rounded to 4 decimals for display.
pub fn display_probability(p: f64) -> f64 {
    (p * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub n_bins: usize,
    pub w: usize,
    pub l: usize,
    pub initial_locks: Vec<String>,
    pub n_rows: usize,
    pub model_metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub index: usize,
    pub probability: f64,
    pub probability_display: f64,
    pub predicted_class: Class,
    pub correctness: CorrectnessLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancesResponse {
    pub schema_version: u32,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub instances: Vec<InstanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub schema_version: u32,
    pub index: i64,
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub bins: Vec<usize>,
    pub z_scores: Vec<f64>,
    pub probability: f64,
    pub probability_display: f64,
    pub predicted_class: Class,
    pub correctness: CorrectnessLabel,
    pub sorted_order: Vec<usize>,
}

impl SummaryResponse {
    pub fn new(session: &Session, s: InstanceSummary) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            index: s.index,
            feature_names: session.feature_names().to_vec(),
            values: s.values,
            bins: s.bins,
            z_scores: s.z_scores,
            probability: s.probability,
            probability_display: display_probability(s.probability),
            predicted_class: s.predicted_class,
            correctness: s.correctness,
            sorted_order: s.sorted_order,
        }
    }
}

/// A row index or explicit feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceRef {
    Index(usize),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub instance: InstanceRef,
    /// Replaces the session's initial locks entirely when present.
    #[serde(default)]
    pub locks: Option<Vec<String>>,
    #[serde(default)]
    pub w: Option<usize>,
    #[serde(default)]
    pub l: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeView {
    pub feature: String,
    pub feature_index: usize,
    pub from_value: f64,
    pub from_bin: usize,
    pub to_bin: usize,
    pub to_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveView {
    pub feature: String,
    pub feature_index: usize,
    pub from_bin: usize,
    pub to_bin: usize,
    pub new_value: f64,
    pub probability_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub schema_version: u32,
    /// Row index, or -1 for explicit values.
    pub instance_index: i64,
    pub status: SearchStatus,
    pub original_class: Class,
    pub final_class: Class,
    pub original_probability: f64,
    pub original_probability_display: f64,
    pub final_probability: f64,
    pub final_probability_display: f64,
    pub changes: Vec<ChangeView>,
    pub trace: Vec<MoveView>,
    pub locks: Vec<String>,
    pub w: usize,
    pub l: usize,
}

impl ExplainResponse {
    pub fn new(
        names: &[String],
        instance_index: i64,
        result: &CounterfactualResult,
        locks: Vec<String>,
        w: usize,
        l: usize,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            instance_index,
            status: result.status,
            original_class: result.direction,
            final_class: binflip::model::predict_class(result.final_probability),
            original_probability: result.original_probability,
            original_probability_display: display_probability(result.original_probability),
            final_probability: result.final_probability,
            final_probability_display: display_probability(result.final_probability),
            changes: result
                .changes
                .iter()
                .map(|c| ChangeView {
                    feature: names[c.feature].clone(),
                    feature_index: c.feature,
                    from_value: c.from_value,
                    from_bin: c.from_bin,
                    to_bin: c.to_bin,
                    to_value: c.to_value,
                })
                .collect(),
            trace: result
                .trace
                .iter()
                .map(|m| MoveView {
                    feature: names[m.feature].clone(),
                    feature_index: m.feature,
                    from_bin: m.from_bin,
                    to_bin: m.to_bin,
                    new_value: m.new_value,
                    probability_after: m.probability_after,
                })
                .collect(),
            locks,
            w,
            l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionsResponse {
    pub schema_version: u32,
    pub condition: Condition,
    pub n_bins: usize,
    pub feature_names: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub opacities: Vec<Vec<f64>>,
}

/// Status code plus serialized JSON body.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn ok<T: Serialize>(value: &T) -> Self {
        Self {
            status: 200,
            body: serde_json::to_string(value).expect("response types serialize"),
        }
    }

    fn error(status: u16, code: &str, message: impl Into<String>) -> Self {
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        };
        Self {
            status,
            body: serde_json::to_string(&body).expect("error body serializes"),
        }
    }

    fn predictor_failure(e: &PredictError) -> Self {
        match e {
            PredictError::WidthMismatch { .. } => Self::error(400, "bad_instance", e.to_string()),
            _ => Self::error(502, "predictor_failed", e.to_string()),
        }
    }
}

fn parse_index(raw: &str) -> Result<usize, Reply> {
    raw.parse::<usize>()
        .map_err(|_| Reply::error(400, "bad_index", format!("{raw:?} is not a row index")))
}

fn summary_failure(e: &SummaryError) -> Reply {
    match e {
        SummaryError::IndexOutOfRange { .. } => Reply::error(404, "not_found", e.to_string()),
        SummaryError::WidthMismatch { .. } | SummaryError::Bin(_) => {
            Reply::error(400, "bad_instance", e.to_string())
        }
        SummaryError::Predict(p) => Reply::predictor_failure(p),
    }
}

pub fn handle_meta(session: &Session) -> Reply {
    let options = session.options();
    Reply::ok(&MetaResponse {
        schema_version: SCHEMA_VERSION,
        feature_names: session.feature_names().to_vec(),
        target_name: session.dataset().target_name().to_string(),
        n_bins: options.n_bins,
        w: options.max_changed_features,
        l: options.max_bin_distance,
        initial_locks: session.lock_names(session.initial_locks()),
        n_rows: session.dataset().n_rows(),
        model_metrics: session.metrics(),
    })
}

pub fn handle_instances(session: &Session, offset: Option<&str>, limit: Option<&str>) -> Reply {
    let parse = |raw: Option<&str>, name: &str, default: usize| match raw {
        None => Ok(default),
        Some(s) => s.parse::<usize>().map_err(|_| {
            Reply::error(
                400,
                "bad_query",
                format!("{name} must be a non-negative integer"),
            )
        }),
    };
    let offset = match parse(offset, "offset", 0) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let limit = match parse(limit, "limit", DEFAULT_PAGE) {
        Ok(v) => v.min(MAX_PAGE),
        Err(r) => return r,
    };
    let total = session.dataset().n_rows();
    let start = offset.min(total);
    let end = start.saturating_add(limit).min(total);
    let rows = &session.dataset().rows()[start..end];
    let probabilities = match session.model().predict_proba(rows) {
        Ok(p) => p,
        Err(e) => return Reply::predictor_failure(&e),
    };
    let instances = probabilities
        .iter()
        .enumerate()
        .map(|(k, &p)| InstanceRow {
            index: start + k,
            probability: p,
            probability_display: display_probability(p),
            predicted_class: binflip::model::predict_class(p),
            correctness: binflip::model::correctness_label(p, session.truth(start + k)),
        })
        .collect();
    Reply::ok(&InstancesResponse {
        schema_version: SCHEMA_VERSION,
        offset,
        limit,
        total,
        instances,
    })
}

pub fn handle_summary(session: &Session, raw_index: &str) -> Reply {
    let index = match parse_index(raw_index) {
        Ok(i) => i,
        Err(r) => return r,
    };
    match session.summary(index) {
        Ok(s) => Reply::ok(&SummaryResponse::new(session, s)),
        Err(e) => summary_failure(&e),
    }
}

pub fn handle_explain(session: &Session, body: &[u8]) -> Reply {
    let request: ExplainRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return Reply::error(400, "bad_request", e.to_string()),
    };
    explain_request(session, &request)
}

pub fn explain_request(session: &Session, request: &ExplainRequest) -> Reply {
    if request.w == Some(0) || request.l == Some(0) {
        return Reply::error(400, "bad_limits", "w and l must be at least 1");
    }
    let locks = match &request.locks {
        Some(names) => match session.resolve_locks(names) {
            Ok(l) => l,
            Err(e) => return Reply::error(400, "unknown_feature", e.to_string()),
        },
        None => session.initial_locks().clone(),
    };
    let (index, values) = match &request.instance {
        InstanceRef::Index(i) => match session.dataset().row(*i) {
            Some(row) => (*i as i64, row.to_vec()),
            None => {
                return Reply::error(
                    404,
                    "not_found",
                    format!(
                        "row {i} is out of range for {} rows",
                        session.dataset().n_rows()
                    ),
                )
            }
        },
        InstanceRef::Values(v) => (-1, v.clone()),
    };
    let config = session.search_config(locks, request.w, request.l);
    match session.explain(&values, &config) {
        Ok(result) => Reply::ok(&ExplainResponse::new(
            session.feature_names(),
            index,
            &result,
            session.lock_names(&config.locks),
            config.max_changed_features,
            config.max_bin_distance,
        )),
        Err(SearchError::Predict(e)) => Reply::predictor_failure(&e),
        Err(e) => Reply::error(400, "bad_instance", e.to_string()),
    }
}

pub fn handle_distributions(session: &Session, condition: Option<&str>) -> Reply {
    let condition = match condition.unwrap_or("all").parse::<Condition>() {
        Ok(c) => c,
        Err(e) => return Reply::error(400, "bad_condition", e.to_string()),
    };
    if condition != Condition::All && !session.expose_targets() {
        return Reply::error(
            400,
            "targets_unavailable",
            "ground truth is hidden in this session; only condition=all is available",
        );
    }
    let h = session.histogram(condition);
    Reply::ok(&DistributionsResponse {
        schema_version: SCHEMA_VERSION,
        condition,
        n_bins: session.grid().n_bins(),
        feature_names: session.feature_names().to_vec(),
        counts: h.counts,
        opacities: h.opacities,
    })
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (
            status,
            [(header::CONTENT_TYPE, "application/json")],
            self.body,
        )
            .into_response()
    }
}

type Shared = Arc<Session>;

async fn blocking<F>(session: Shared, f: F) -> Reply
where
    F: FnOnce(&Session) -> Reply + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&session))
        .await
        .unwrap_or_else(|e| Reply::error(500, "internal", e.to_string()))
}

async fn meta_route(State(s): State<Shared>) -> Reply {
    handle_meta(&s)
}

async fn instances_route(
    State(s): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> Reply {
    blocking(s, move |s| {
        handle_instances(
            s,
            q.get("offset").map(String::as_str),
            q.get("limit").map(String::as_str),
        )
    })
    .await
}

async fn summary_route(State(s): State<Shared>, Path(index): Path<String>) -> Reply {
    blocking(s, move |s| handle_summary(s, &index)).await
}

async fn explain_route(State(s): State<Shared>, body: Bytes) -> Reply {
    blocking(s, move |s| handle_explain(s, &body)).await
}

async fn distributions_route(
    State(s): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> Reply {
    blocking(s, move |s| {
        handle_distributions(s, q.get("condition").map(String::as_str))
    })
    .await
}

async fn api_not_found() -> Reply {
    Reply::error(404, "not_found", "no such endpoint")
}

/// The API under `/api/v1`, plus static UI assets at `/` when `ui_dir` is set.
pub fn router(session: Arc<Session>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/meta", get(meta_route))
        .route("/instances", get(instances_route))
        .route("/instances/{index}/summary", get(summary_route))
        .route("/explain", post(explain_route))
        .route("/distributions", get(distributions_route))
        .fallback(api_not_found)
        .with_state(session);
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let app = Router::new().nest("/api/v1", api);
    let app = match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    };
    app.layer(cors)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(
    session: Arc<Session>,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, session, ui_dir).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    session: Arc<Session>,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    axum::serve(listener, router(session, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

impl From<SessionError> for Reply {
    fn from(e: SessionError) -> Self {
        Reply::error(400, "bad_request", e.to_string())
    }
}
