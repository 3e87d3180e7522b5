//! JSON HTTP service over an [`Engine`].
//!
//! Reads share a lock; ingestion plans under the read lock, runs inference on
//! the blocking pool, then commits under the write lock, so graph mutations are
//! serialized and a racing duplicate still gets 409.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use persona_core::llm::{infer_traits, InferenceResult, Provenance};
use persona_core::matchmaking::DEFAULT_TOP_K;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::RwLock;

use crate::pipeline::{AppError, Engine, MatchesView, NewStudent, TraitsView};
use crate::store::StudentRecord;

pub type SharedEngine = Arc<RwLock<Engine>>;

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match &self {
            AppError::BadRequest(_) => StatusCode::BAD_REQUEST,
            AppError::NotFound(_) => StatusCode::NOT_FOUND,
            AppError::Conflict(_) => StatusCode::CONFLICT,
            AppError::Upstream(_) => StatusCode::BAD_GATEWAY,
            AppError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// What the service returns for a stored student. Raw trait levels stay server-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentSummary {
    pub student_id: String,
    pub display_name: String,
    pub entities: Vec<String>,
    pub needs_retry: bool,
    pub last_error: Option<String>,
    pub provenance: Option<Provenance>,
    pub traits: TraitsView,
}

fn summarize(engine: &Engine, rec: &StudentRecord) -> Result<StudentSummary, AppError> {
    Ok(StudentSummary {
        student_id: rec.profile.student_id.clone(),
        display_name: rec.profile.display_name.clone(),
        entities: rec
            .profile
            .entities
            .iter()
            .filter(|e| !e.is_personality())
            .map(|e| e.to_string())
            .collect(),
        needs_retry: rec.needs_retry,
        last_error: rec.last_error.clone(),
        provenance: rec.inference.as_ref().map(|i| i.provenance.clone()),
        traits: engine.traits_view(&rec.profile.student_id)?,
    })
}

pub fn router(state: SharedEngine) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/students", post(create_student))
        .route("/students/{id}", get(get_student))
        .route("/students/{id}/traits", get(get_traits))
        .route("/students/{id}/matches", get(get_matches))
        .route("/students/{id}/retry", post(retry_student))
        .with_state(state)
}

async fn health(State(state): State<SharedEngine>) -> Json<serde_json::Value> {
    let engine = state.read().await;
    Json(json!({
        "status": "ok",
        "students": engine.store.len(),
        "model": engine.provider.model(),
    }))
}

async fn infer_off_thread(state: &SharedEngine, post: String, roster: Vec<String>) -> Result<InferenceResult, String> {
    let (provider, policy) = {
        let e = state.read().await;
        (e.provider.clone(), e.policy())
    };
    tokio::task::spawn_blocking(move || infer_traits(provider.as_ref(), &post, &roster, &policy).map_err(|e| e.to_string()))
        .await
        .unwrap_or_else(|e| Err(format!("inference task failed: {e}")))
}

async fn create_student(
    State(state): State<SharedEngine>,
    body: Result<Json<NewStudent>, JsonRejection>,
) -> Result<(StatusCode, Json<StudentSummary>), AppError> {
    let Json(new) = body.map_err(|e| AppError::BadRequest(e.body_text()))?;
    let roster = state.read().await.plan_ingest(&new)?;
    let outcome = infer_off_thread(&state, new.post.clone(), roster).await;
    if let Err(e) = &outcome {
        log::warn!("inference failed for {}: {e}", new.student_id);
    }
    let mut engine = state.write().await;
    let rec = engine.commit_ingest(&new, outcome)?;
    Ok((StatusCode::CREATED, Json(summarize(&engine, &rec)?)))
}

async fn get_student(State(state): State<SharedEngine>, Path(id): Path<String>) -> Result<Json<StudentSummary>, AppError> {
    let engine = state.read().await;
    let rec = engine.record(&id)?;
    Ok(Json(summarize(&engine, rec)?))
}

async fn get_traits(State(state): State<SharedEngine>, Path(id): Path<String>) -> Result<Json<TraitsView>, AppError> {
    Ok(Json(state.read().await.traits_view(&id)?))
}

#[derive(Debug, Deserialize)]
struct MatchQuery {
    k: Option<usize>,
}

async fn get_matches(
    State(state): State<SharedEngine>,
    Path(id): Path<String>,
    query: Result<Query<MatchQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<MatchesView>, AppError> {
    let Query(q) = query.map_err(|e| AppError::BadRequest(e.body_text()))?;
    Ok(Json(state.read().await.matches_view(&id, q.k.unwrap_or(DEFAULT_TOP_K))?))
}

async fn retry_student(State(state): State<SharedEngine>, Path(id): Path<String>) -> Result<Json<StudentSummary>, AppError> {
    let (post, roster) = {
        let e = state.read().await;
        (e.record(&id)?.post.clone(), e.retry_roster())
    };
    let outcome = infer_off_thread(&state, post, roster).await;
    let mut engine = state.write().await;
    let rec = engine.commit_retry(&id, outcome)?;
    Ok(Json(summarize(&engine, &rec)?))
}

/// Bind and serve until Ctrl-C. `engine` must be built outside any runtime.
pub fn serve(engine: Engine) -> anyhow::Result<()> {
    let bind = engine.config.service.bind.clone();
    let state: SharedEngine = Arc::new(RwLock::new(engine));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let result = rt.block_on({
        let state = state.clone();
        async move {
            let listener = tokio::net::TcpListener::bind(&bind).await?;
            log::info!("listening on {}", listener.local_addr()?);
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
            anyhow::Ok(())
        }
    });
    drop(rt);
    // the provider may own a blocking http client, which must be dropped off the runtime
    drop(state);
    result
}
