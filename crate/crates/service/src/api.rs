use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tower_http::services::ServeDir;

use convsr_core::ingest::Split;
use convsr_core::pipeline::{run_session_turn, PipelineError, Session, SessionError, TurnTrace};
use convsr_core::run::RunConfig;
use convsr_core::types::{Dialogue, Passage};

use crate::state::AppState;

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    stage: Option<&'static str>,
    partial: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), stage: None, partial: None }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn backend(err: &PipelineError) -> Self {
        Self {
            status: StatusCode::BAD_GATEWAY,
            message: err.message.clone(),
            stage: Some(err.stage.as_str()),
            partial: serde_json::to_value(&err.partial).ok(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(stage) = self.stage {
            body["stage"] = json!(stage);
        }
        if let Some(partial) = self.partial {
            body["partial"] = partial;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::invalid(r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// All endpoints under `/api`, plus the UI bundle at `/` when given.
pub fn router(state: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", get(datasets))
        .route("/api/dialogues", get(list_dialogues))
        .route("/api/dialogues/:id", get(get_dialogue))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id", get(get_session))
        .route("/api/sessions/:id/questions", post(ask))
        .route("/api/eval/jobs", post(create_job))
        .route("/api/eval/jobs/:id", get(get_job))
        .route("/api/eval/jobs/:id/report", get(get_report))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A trace as sent to clients: scores become `{turn, score}` pairs.
pub fn trace_json(trace: &TurnTrace) -> Value {
    let mut v = serde_json::to_value(trace).expect("trace serializes");
    v["scores"] = trace.scores.iter().map(|s| json!({ "turn": s.turn_index, "score": s.score })).collect();
    v
}

async fn health(State(state): State<Shared>) -> Json<Value> {
    Json(json!({ "status": "ok", "datasets": state.datasets.len(), "sessions": state.session_count() }))
}

async fn datasets(State(state): State<Shared>) -> Json<Value> {
    let list: Vec<Value> = state
        .datasets
        .iter()
        .map(|d| {
            let splits: Map<String, Value> = d
                .splits
                .iter()
                .map(|(s, c)| (s.to_string(), json!({ "dialogues": c.dialogues.len(), "questions": c.question_count() })))
                .collect();
            json!({ "name": d.name, "splits": splits, "rewrites": d.rewrites.len() })
        })
        .collect();
    Json(Value::Array(list))
}

#[derive(Deserialize)]
struct ListQuery {
    dataset: Option<String>,
    split: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

const MAX_PAGE: usize = 200;

async fn list_dialogues(State(state): State<Shared>, Query(q): Query<ListQuery>) -> ApiResult<Json<Value>> {
    let dataset = match &q.dataset {
        Some(name) => state.dataset(name).ok_or_else(|| ApiError::not_found("dataset", name))?,
        None => state.datasets.first().ok_or_else(|| ApiError::not_found("dataset", ""))?,
    };
    let split = match &q.split {
        Some(s) => s.parse::<Split>().map_err(ApiError::invalid)?,
        None => *dataset.splits.keys().next().expect("datasets hold a split"),
    };
    let corpus = dataset.splits.get(&split).ok_or_else(|| ApiError::not_found("split", split.as_str()))?;
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(20).min(MAX_PAGE);
    let items: Vec<Value> = corpus
        .dialogues
        .iter()
        .skip(offset)
        .take(limit)
        .map(|d| {
            json!({
                "id": d.id,
                "title": d.passage.title,
                "turns": d.turns.len(),
                "first_question": d.turns.first().map(|t| t.question.text.clone()),
            })
        })
        .collect();
    Ok(Json(json!({
        "dataset": dataset.name,
        "split": split,
        "total": corpus.dialogues.len(),
        "offset": offset,
        "limit": limit,
        "items": items,
    })))
}

fn find_dialogue<'a>(state: &'a AppState, id: &str) -> Option<(&'a str, Split, &'a Dialogue)> {
    state.datasets.iter().find_map(|ds| {
        ds.splits.iter().find_map(|(split, c)| c.dialogue(id).map(|d| (ds.name.as_str(), *split, d)))
    })
}

async fn get_dialogue(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let (dataset, split, d) = find_dialogue(&state, &id).ok_or_else(|| ApiError::not_found("dialogue", &id))?;
    let mut v = serde_json::to_value(d).expect("dialogue serializes");
    v["dataset"] = json!(dataset);
    v["split"] = json!(split);
    Ok(Json(v))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PassageInput {
    #[serde(default)]
    title: String,
    #[serde(default)]
    background: String,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    dialogue_id: Option<String>,
    passage: Option<PassageInput>,
    mode: Option<String>,
    #[serde(default)]
    params: Map<String, Value>,
}

/// Overlays request fields on the service defaults.
fn run_config(defaults: &RunConfig, mode: Option<&str>, params: Map<String, Value>) -> ApiResult<RunConfig> {
    let mut merged = match serde_json::to_value(defaults).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("config is an object"),
    };
    merged.extend(params);
    if let Some(mode) = mode {
        merged.insert("mode".into(), json!(mode));
    }
    let config: RunConfig = serde_json::from_value(Value::Object(merged)).map_err(|e| ApiError::invalid(e.to_string()))?;
    config.validate().map_err(|e| ApiError::invalid(e.0))?;
    Ok(config)
}

async fn create_session(State(state): State<Shared>, body: Result<Json<NewSession>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let config = run_config(&state.defaults, req.mode.as_deref(), req.params)?;
    let passage = match (req.dialogue_id, req.passage) {
        (Some(id), None) => find_dialogue(&state, &id).ok_or_else(|| ApiError::not_found("dialogue", &id))?.2.passage.clone(),
        (None, Some(p)) if !p.text.trim().is_empty() => {
            Arc::new(Passage::quac_style("live", p.title, &p.text).with_background(p.background))
        }
        (None, Some(_)) => return Err(ApiError::invalid("passage text is empty")),
        _ => return Err(ApiError::invalid("give exactly one of dialogue_id and passage")),
    };
    let pipeline = config.build(state.model.clone(), None).map_err(|e| ApiError::invalid(e.0))?;
    let id = state.add_session(|id| Session::new(id, passage, pipeline));
    Ok(Json(json!({ "session_id": id, "config": config.snapshot() })))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let s = session.lock().expect("session lock");
    Ok(Json(json!({
        "id": s.id,
        "mode": s.pipeline.mode.to_string(),
        "passage": s.dialogue.passage,
        "in_flight": s.in_flight(),
        "traces": s.traces.iter().map(trace_json).collect::<Vec<_>>(),
    })))
}

#[derive(Deserialize)]
struct QuestionBody {
    text: String,
}

async fn ask(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<QuestionBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(QuestionBody { text }) = body?;
    let session = state.session(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let outcome = tokio::task::spawn_blocking(move || run_session_turn(&session, &text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match outcome {
        Ok(trace) => Ok(Json(trace_json(&trace))),
        Err(SessionError::ConcurrentTurn(id)) => {
            Err(ApiError::new(StatusCode::CONFLICT, format!("session {id} is already answering a question")))
        }
        Err(SessionError::EmptyQuestion) => Err(ApiError::invalid("empty question")),
        Err(SessionError::Pipeline(e)) => Err(ApiError::backend(&e)),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewJob {
    dataset: Option<String>,
    split: Option<String>,
    #[serde(default)]
    config: Map<String, Value>,
}

async fn create_job(State(state): State<Shared>, body: Result<Json<NewJob>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let config = run_config(&state.defaults, None, req.config)?;
    let dataset = match &req.dataset {
        Some(name) => state.dataset(name).ok_or_else(|| ApiError::invalid(format!("unknown dataset {name:?}")))?,
        None => state.datasets.first().ok_or_else(|| ApiError::invalid("no dataset loaded"))?,
    };
    let split = req.split.as_deref().unwrap_or("val").parse::<Split>().map_err(ApiError::invalid)?;
    let corpus = dataset
        .splits
        .get(&split)
        .cloned()
        .ok_or_else(|| ApiError::invalid(format!("dataset {} has no {split} split", dataset.name)))?;
    let pipeline = config.build(state.model.clone(), Some(dataset.rewrites.clone())).map_err(|e| ApiError::invalid(e.0))?;
    let mut snapshot = config.snapshot();
    snapshot.insert("dataset".into(), dataset.name.clone());
    snapshot.insert("split".into(), split.to_string());
    let id = state.submit_job(pipeline, corpus, snapshot);
    Ok(Json(json!({ "job_id": id })))
}

async fn get_job(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = state.job(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    let entry = job.lock().expect("job lock");
    Ok(Json(serde_json::to_value(&entry.job).expect("job serializes")))
}

async fn get_report(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = state.job(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    let entry = job.lock().expect("job lock");
    match &entry.report {
        Some(report) => Ok(Json(serde_json::to_value(report.as_ref()).expect("report serializes"))),
        None => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("job {id} has no report ({:?})", entry.job.state).to_lowercase(),
        )),
    }
}
