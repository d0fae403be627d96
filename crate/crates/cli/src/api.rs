//! JSON-over-HTTP API under `/api/v1`.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use recomed_core::atc::AtcAnnotation;
use recomed_core::metrics::atc_purity;
use recomed_core::recommend::{explain, recommend, Explanation, Flag, ModelArtifact, Recommendation, ScoreComponents};
use recomed_core::rulemine::Strength;
use recomed_core::{Error, MedId};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnknownMedicine,
    ModelUnavailable,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::UnknownMedicine => StatusCode::NOT_FOUND,
            ErrorCode::ModelUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn status(&self) -> StatusCode {
        self.code.status()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownMedicines(names) => {
                ApiError::new(ErrorCode::UnknownMedicine, "unknown medicines").with_details(json!({ "unknown": names }))
            }
            Error::UnknownMedicine(m) => ApiError::new(ErrorCode::UnknownMedicine, format!("unknown medicine {m}")),
            e @ (Error::InvalidParameter { .. } | Error::NotInPool(_)) => ApiError::new(ErrorCode::BadRequest, e.to_string()),
            e @ (Error::Io(_) | Error::Json(_) | Error::Format { .. } | Error::Corrupt(_)) => {
                ApiError::new(ErrorCode::BadRequest, e.to_string())
            }
            e => ApiError::new(ErrorCode::Internal, e.to_string()),
        }
    }
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::UnknownMedicine => "unknown_medicine",
            ErrorCode::ModelUnavailable => "model_unavailable",
            ErrorCode::Internal => "internal",
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)?;
        if !self.details.is_null() {
            write!(f, " {}", self.details)?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(ErrorCode::BadRequest, r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(ErrorCode::BadRequest, r.body_text())
    }
}

/// A model artifact together with the hash of the bytes it was read from.
#[derive(Debug)]
pub struct Loaded {
    pub artifact: ModelArtifact,
    pub fingerprint: String,
    pub path: Option<PathBuf>,
}

impl Loaded {
    pub fn from_bytes(bytes: &[u8], path: Option<PathBuf>) -> recomed_core::Result<Self> {
        Ok(Loaded {
            artifact: ModelArtifact::from_bytes(bytes)?,
            fingerprint: recomed_core::fingerprint(bytes),
            path,
        })
    }

    pub fn from_path(path: &Path) -> recomed_core::Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, Some(path.to_path_buf()))
    }
}

/// Shared service state. Readers clone the current `Arc` and never hold the
/// lock while answering; reload swaps the whole pair at once.
#[derive(Debug, Default)]
pub struct ServiceState {
    current: RwLock<Option<Arc<Loaded>>>,
}

impl ServiceState {
    pub fn new(loaded: Option<Loaded>) -> Arc<Self> {
        Arc::new(ServiceState {
            current: RwLock::new(loaded.map(Arc::new)),
        })
    }

    pub fn current(&self) -> Result<Arc<Loaded>, ApiError> {
        self.current
            .read()
            .expect("state lock poisoned")
            .clone()
            .ok_or_else(|| ApiError::new(ErrorCode::ModelUnavailable, "no model loaded"))
    }

    pub fn swap(&self, loaded: Loaded) -> Arc<Loaded> {
        let loaded = Arc::new(loaded);
        *self.current.write().expect("state lock poisoned") = Some(loaded.clone());
        loaded
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub medicines: Vec<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationItem {
    pub med_id: MedId,
    pub name: String,
    pub score: f64,
    pub components: ScoreComponents,
    pub atc: Vec<String>,
    pub atc_matched: bool,
    /// Distinct ATC level-1 letters, or "unmatched".
    pub badge: String,
    pub flag: Flag,
}

impl From<Recommendation> for RecommendationItem {
    fn from(r: Recommendation) -> Self {
        RecommendationItem {
            med_id: r.med_id,
            name: r.name,
            score: r.score,
            components: r.components,
            badge: badge(&r.atc),
            atc: r.atc.codes.iter().map(|c| c.to_string()).collect(),
            atc_matched: r.atc.matched,
            flag: r.flag,
        }
    }
}

fn badge(a: &AtcAnnotation) -> String {
    match a.prefixes(1) {
        Ok(p) if a.matched && !p.is_empty() => p.into_iter().collect::<Vec<_>>().join(""),
        _ => "unmatched".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub model_fingerprint: String,
    pub recommendations: Vec<RecommendationItem>,
    /// Query names not found in the catalog.
    pub unknown: Vec<String>,
}

/// Shared by the HTTP handler and the `recommend` subcommand.
pub fn recommend_response(loaded: &Loaded, medicines: &[String], k: usize) -> Result<RecommendResponse, ApiError> {
    if medicines.is_empty() {
        return Err(ApiError::new(ErrorCode::BadRequest, "medicines must not be empty"));
    }
    let model = &loaded.artifact.model;
    let (known, unknown) = model.resolve_names(medicines);
    if known.is_empty() {
        return Err(Error::UnknownMedicines(unknown).into());
    }
    let out = recommend(model, &loaded.artifact.rules, &known, k)?;
    Ok(RecommendResponse {
        model_fingerprint: loaded.fingerprint.clone(),
        recommendations: out.recommendations.into_iter().map(Into::into).collect(),
        unknown,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainRequest {
    pub medicines: Vec<String>,
    pub candidate: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub model_fingerprint: String,
    pub candidate_name: String,
    pub explanation: Explanation,
    /// Rules rendered with medicine names, in `explanation.fired_rules` order.
    pub rules: Vec<RuleView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleView {
    pub rule_id: usize,
    pub antecedents: Vec<String>,
    pub consequents: Vec<String>,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
    pub strength: Strength,
}

fn one_id(loaded: &Loaded, name: &str) -> Result<MedId, ApiError> {
    loaded
        .artifact
        .model
        .resolve_name(name)
        .first()
        .copied()
        .ok_or_else(|| Error::UnknownMedicines(vec![name.to_string()]).into())
}

pub fn explain_response(loaded: &Loaded, req: &ExplainRequest) -> Result<ExplainResponse, ApiError> {
    let model = &loaded.artifact.model;
    let (known, unknown) = model.resolve_names(&req.medicines);
    if known.is_empty() {
        return Err(Error::UnknownMedicines(unknown).into());
    }
    let candidate = one_id(loaded, &req.candidate)?;
    let exp = explain(model, &loaded.artifact.rules, &known, candidate)?;
    let names = |ids: &[MedId]| ids.iter().map(|m| model.name(*m).to_string()).collect();
    let rules = exp
        .fired_rules
        .iter()
        .map(|r| RuleView {
            rule_id: r.rule_id,
            antecedents: names(&r.antecedent),
            consequents: names(&r.consequent),
            support: r.support,
            confidence: r.confidence,
            lift: r.lift,
            strength: r.strength,
        })
        .collect();
    Ok(ExplainResponse {
        model_fingerprint: loaded.fingerprint.clone(),
        candidate_name: model.name(candidate).to_string(),
        explanation: exp,
        rules,
    })
}

#[derive(Debug, Deserialize)]
struct MedicineQuery {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicineItem {
    pub med_id: MedId,
    pub name: String,
    pub generic_code: String,
    pub frequency: u64,
    pub badge: String,
    pub is_stop: bool,
    pub is_outlier: bool,
}

#[derive(Debug, Deserialize)]
struct RulesQuery {
    medicine: String,
    limit: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct ReloadRequest {
    path: Option<PathBuf>,
}

async fn health(State(state): State<Arc<ServiceState>>) -> Response {
    match state.current() {
        Ok(l) => Json(json!({
            "status": "ok",
            "fingerprint": l.fingerprint,
            "medicines": l.artifact.model.catalog.len(),
            "rules": l.artifact.rules.rules.len(),
            "communities": l.artifact.model.partition.len(),
        }))
        .into_response(),
        Err(e) => e.into_response(),
    }
}

async fn recommend_handler(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let Json(req) = body?;
    let loaded = state.current()?;
    Ok(Json(recommend_response(&loaded, &req.medicines, req.k.unwrap_or(DEFAULT_K))?))
}

async fn explain_handler(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> Result<Json<ExplainResponse>, ApiError> {
    let Json(req) = body?;
    let loaded = state.current()?;
    Ok(Json(explain_response(&loaded, &req)?))
}

async fn medicines(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<MedicineQuery>, QueryRejection>,
) -> Result<Json<Vec<MedicineItem>>, ApiError> {
    let Query(q) = query?;
    let loaded = state.current()?;
    let model = &loaded.artifact.model;
    let items = model
        .search(&q.q, q.limit.unwrap_or(20))
        .into_iter()
        .map(|e| MedicineItem {
            med_id: e.med_id,
            name: e.name.clone(),
            generic_code: e.generic_code.clone(),
            frequency: e.frequency,
            badge: model.annotation(e.med_id).map(badge).unwrap_or_else(|| "unmatched".into()),
            is_stop: model.is_stop(e.med_id),
            is_outlier: model.is_outlier(e.med_id),
        })
        .collect();
    Ok(Json(items))
}

async fn clusters(State(state): State<Arc<ServiceState>>) -> Result<Json<Value>, ApiError> {
    let loaded = state.current()?;
    let model = &loaded.artifact.model;
    let purity = atc_purity(model, 1)?;
    let member = |m: &MedId| json!({ "med_id": m, "name": model.name(*m) });
    let communities: Vec<Value> = model
        .partition
        .communities()
        .iter()
        .zip(&purity.clusters)
        .enumerate()
        .map(|(id, (members, p))| {
            json!({
                "id": id,
                "size": members.len(),
                "modal_atc": p.modal_prefix,
                "atc_purity": p.purity,
                "members": members.iter().map(member).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Json(json!({
        "model_fingerprint": loaded.fingerprint,
        "modularity": model.modularity,
        "communities": communities,
        "outliers": model.outliers.med_ids.iter().map(member).collect::<Vec<_>>(),
        "stop_medicines": model.stoplist.med_ids.iter().map(member).collect::<Vec<_>>(),
    })))
}

async fn rules(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<RulesQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query?;
    let loaded = state.current()?;
    let model = &loaded.artifact.model;
    let ids = model.resolve_name(&q.medicine);
    if ids.is_empty() {
        return Err(Error::UnknownMedicines(vec![q.medicine]).into());
    }
    let names = |xs: &[MedId]| xs.iter().map(|m| model.name(*m).to_string()).collect::<Vec<_>>();
    let touching: Vec<RuleView> = loaded
        .artifact
        .rules
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| ids.iter().any(|m| r.antecedent.contains(m) || r.consequent.contains(m)))
        .take(q.limit.unwrap_or(100))
        .map(|(i, r)| RuleView {
            rule_id: i,
            antecedents: names(&r.antecedent),
            consequents: names(&r.consequent),
            support: r.support,
            confidence: r.confidence,
            lift: r.lift,
            strength: r.strength,
        })
        .collect();
    Ok(Json(json!({ "medicine": model.name(ids[0]), "rules": touching })))
}

async fn reload(
    State(state): State<Arc<ServiceState>>,
    body: Option<Json<ReloadRequest>>,
) -> Result<Json<Value>, ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let path = match req.path {
        Some(p) => p,
        None => state
            .current()
            .ok()
            .and_then(|l| l.path.clone())
            .ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "no path given and no current model path"))?,
    };
    let loaded = tokio::task::spawn_blocking(move || Loaded::from_path(&path))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
        .map_err(|e| {
            warn!("reload failed: {e}");
            ApiError::from(e)
        })?;
    let now = state.swap(loaded);
    info!("reloaded model {}", now.fingerprint);
    Ok(Json(json!({ "status": "ok", "fingerprint": now.fingerprint })))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/recommend", post(recommend_handler))
        .route("/api/v1/explain", post(explain_handler))
        .route("/api/v1/medicines", get(medicines))
        .route("/api/v1/clusters", get(clusters))
        .route("/api/v1/rules", get(rules))
        .route("/api/v1/reload", post(reload))
        .with_state(state)
}
