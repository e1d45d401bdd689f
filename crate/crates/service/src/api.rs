use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use weat_core::pipeline::{staged_explanations, StagedExplanation};
use weat_core::prompt::{default_slot_text, TemplateOverrides};
use weat_core::{
    accept_staged, export_pcex, export_portable, import_source, run_generation, GenerationTranscript,
    Origin, PromptConfig, ProviderKind, Selections, SimilarityReport, WorkedExample,
};

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::jobs::{GenerationJob, JobStatus};
use crate::store::{ExampleSummary, FileStore, TRANSCRIPT_FILE};

type ApiResult<T> = Result<T, ServiceError>;
type Clock = fn() -> DateTime<Utc>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: FileStore,
    config: ServiceConfig,
    clock: Clock,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> ApiResult<Self> {
        Self::with_clock(config, Utc::now)
    }

    pub fn with_clock(config: ServiceConfig, clock: Clock) -> ApiResult<Self> {
        config.check()?;
        let store = FileStore::open(&config.storage_root)?;
        for id in store.recover_interrupted_jobs(clock())? {
            tracing::warn!(example = %id, "marked interrupted generation job as failed");
        }
        Ok(Self {
            inner: Arc::new(Inner {
                store,
                config,
                clock,
                locks: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn store(&self) -> &FileStore {
        &self.inner.store
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn now(&self) -> DateTime<Utc> {
        (self.inner.clock)()
    }

    /// Serializes mutations of one example; other examples are unaffected.
    async fn lock(&self, id: &str) -> tokio::sync::OwnedMutexGuard<()> {
        let lock = {
            let mut locks = self.inner.locks.lock().expect("lock table poisoned");
            locks.entry(id.to_owned()).or_default().clone()
        };
        lock.lock_owned().await
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/prompt-defaults", get(prompt_defaults))
        .route("/examples", post(create_example).get(list_examples))
        .route(
            "/examples/{id}",
            get(get_example).patch(update_example).delete(delete_example),
        )
        .route("/examples/{id}/generate", post(generate))
        .route("/examples/{id}/job", get(get_job))
        .route("/examples/{id}/accept", post(accept))
        .route("/examples/{id}/lines/{n}/explanations", post(add_explanation))
        .route(
            "/examples/{id}/lines/{n}/explanations/{level}",
            patch(edit_explanation).delete(remove_explanation),
        )
        .route("/examples/{id}/challenge/{n}", post(mark_challenge).delete(clear_challenge))
        .route("/examples/{id}/export", get(export));
    let mut app = Router::new().nest("/api/v1", api);
    if let Some(dir) = &state.config().ui_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    app.with_state(state)
}

pub async fn serve(config: ServiceConfig) -> ApiResult<()> {
    let listen = config.listen.clone();
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot listen on {listen}: {e}")))?;
    tracing::info!(address = %listen, "serving /api/v1");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Config(e.to_string()))
}

#[derive(Debug, Serialize)]
struct ExampleView {
    revision: u64,
    example: WorkedExample,
}

async fn healthz() -> Json<Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Serialize)]
struct PromptDefaults {
    config: PromptConfig,
    templates: TemplateOverrides,
}

async fn prompt_defaults(State(state): State<AppState>) -> Json<PromptDefaults> {
    Json(PromptDefaults {
        config: state.config().prompt.clone(),
        templates: default_slot_text(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    id: Option<String>,
    title: String,
    #[serde(default)]
    description: String,
    source: String,
    #[serde(default = "default_language")]
    language_tag: String,
}

fn default_language() -> String {
    "java".to_owned()
}

async fn create_example(
    State(state): State<AppState>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ExampleView>)> {
    let Json(request) = body?;
    let mut example = import_source(
        &request.title,
        &request.description,
        &request.source,
        &request.language_tag,
        state.now(),
    )?;
    if let Some(id) = request.id {
        example = example.with_id(id);
    }
    let stored = state.store().create(&example)?;
    Ok((
        StatusCode::CREATED,
        Json(ExampleView {
            revision: stored.revision,
            example: stored.example,
        }),
    ))
}

#[derive(Debug, Serialize)]
struct ExampleList {
    examples: Vec<ExampleSummary>,
}

async fn list_examples(State(state): State<AppState>) -> ApiResult<Json<ExampleList>> {
    Ok(Json(ExampleList {
        examples: state.store().list()?,
    }))
}

async fn get_example(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ExampleView>> {
    let stored = state.store().load(&id)?;
    Ok(Json(ExampleView {
        revision: stored.revision,
        example: stored.example,
    }))
}

async fn delete_example(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let _guard = state.lock(&id).await;
    if let Some(job) = state.store().load_job(&id)? {
        if job.status.is_running() {
            return Err(ServiceError::JobConflict(id));
        }
    }
    state.store().delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Loads under the example lock, checks the client's revision, applies
/// `change` and saves.
async fn mutate(
    state: &AppState,
    id: &str,
    revision: u64,
    change: impl FnOnce(&mut WorkedExample, DateTime<Utc>) -> ApiResult<()>,
) -> ApiResult<Json<ExampleView>> {
    let _guard = state.lock(id).await;
    let stored = state.store().load(id)?;
    if stored.revision != revision {
        return Err(ServiceError::VersionConflict {
            given: revision,
            current: stored.revision,
        });
    }
    let mut example = stored.example;
    change(&mut example, state.now())?;
    let revision = state.store().save(&example, stored.revision)?;
    Ok(Json(ExampleView { revision, example }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateRequest {
    revision: u64,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

async fn update_example(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<UpdateRequest>, JsonRejection>,
) -> ApiResult<Json<ExampleView>> {
    let Json(request) = body?;
    mutate(&state, &id, request.revision, |example, now| {
        if let Some(title) = request.title {
            if title.trim().is_empty() {
                return Err(ServiceError::Validation("title must not be empty".into()));
            }
            example.title = title;
        }
        if let Some(description) = request.description {
            example.description = description;
        }
        example.touch(now);
        Ok(())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRequest {
    revision: u64,
    text: String,
}

#[derive(Debug, Deserialize)]
struct RevisionQuery {
    revision: u64,
}

async fn add_explanation(
    State(state): State<AppState>,
    path: Result<Path<(String, u32)>, PathRejection>,
    body: Result<Json<TextRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ExampleView>)> {
    let Path((id, line)) = path?;
    let Json(request) = body?;
    let view = mutate(&state, &id, request.revision, |example, now| {
        example.attach_explanation(line, &request.text, Origin::HumanAuthored, None, now)?;
        Ok(())
    })
    .await?;
    Ok((StatusCode::CREATED, view))
}

async fn edit_explanation(
    State(state): State<AppState>,
    path: Result<Path<(String, u32, u32)>, PathRejection>,
    body: Result<Json<TextRequest>, JsonRejection>,
) -> ApiResult<Json<ExampleView>> {
    let Path((id, line, level)) = path?;
    let Json(request) = body?;
    mutate(&state, &id, request.revision, |example, now| {
        Ok(example.edit_explanation(line, level, &request.text, now)?)
    })
    .await
}

async fn remove_explanation(
    State(state): State<AppState>,
    path: Result<Path<(String, u32, u32)>, PathRejection>,
    query: Result<Query<RevisionQuery>, QueryRejection>,
) -> ApiResult<Json<ExampleView>> {
    let Path((id, line, level)) = path?;
    let Query(query) = query?;
    mutate(&state, &id, query.revision, |example, now| {
        example.remove_explanation(line, level, now)?;
        Ok(())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChallengeRequest {
    revision: u64,
    distractors: Vec<String>,
    #[serde(default)]
    prompt_hint: Option<String>,
}

async fn mark_challenge(
    State(state): State<AppState>,
    path: Result<Path<(String, u32)>, PathRejection>,
    body: Result<Json<ChallengeRequest>, JsonRejection>,
) -> ApiResult<Json<ExampleView>> {
    let Path((id, line)) = path?;
    let Json(request) = body?;
    mutate(&state, &id, request.revision, |example, now| {
        Ok(example.mark_challenge(line, &request.distractors, request.prompt_hint, now)?)
    })
    .await
}

async fn clear_challenge(
    State(state): State<AppState>,
    path: Result<Path<(String, u32)>, PathRejection>,
    query: Result<Query<RevisionQuery>, QueryRejection>,
) -> ApiResult<Json<ExampleView>> {
    let Path((id, line)) = path?;
    let Query(query) = query?;
    mutate(&state, &id, query.revision, |example, now| Ok(example.clear_challenge(line, now)?)).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateRequest {
    /// Partial prompt config laid over the server default.
    config: Option<Value>,
    provider: Option<ProviderKind>,
}

fn overlay(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (key, value) in patch {
                overlay(base.entry(key).or_insert(Value::Null), value);
            }
        }
        (slot, value) => *slot = value,
    }
}

fn effective_config(defaults: &PromptConfig, patch: Option<Value>) -> ApiResult<PromptConfig> {
    let mut merged = serde_json::to_value(defaults).expect("prompt config serializes");
    if let Some(patch) = patch {
        let Value::Object(fields) = &patch else {
            return Err(ServiceError::Validation("config must be a JSON object".into()));
        };
        const KNOWN: [&str; 6] = [
            "model_id",
            "temperature",
            "max_rounds",
            "include_description",
            "role_name",
            "template_overrides",
        ];
        if let Some(unknown) = fields.keys().find(|key| !KNOWN.contains(&key.as_str())) {
            return Err(ServiceError::Validation(format!("config: unknown field {unknown:?}")));
        }
        overlay(&mut merged, patch);
    }
    let config: PromptConfig =
        serde_json::from_value(merged).map_err(|e| ServiceError::Validation(format!("config: {e}")))?;
    config.check().map_err(|e| ServiceError::Validation(e.to_string()))?;
    Ok(config)
}

async fn generate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Option<Json<GenerateRequest>>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<GenerationJob>)> {
    let request = body?.map(|Json(r)| r).unwrap_or_default();
    let guard = state.lock(&id).await;
    let stored = state.store().load(&id)?;
    if let Some(job) = state.store().load_job(&id)? {
        if !job.status.is_terminal() {
            return Err(ServiceError::JobConflict(id));
        }
    }
    let config = effective_config(&state.config().prompt, request.config)?;
    let kind = request.provider.unwrap_or(state.config().default_provider);
    let spec = state.config().provider_for(kind, &state.store().recordings_dir(&id)?)?;
    let job = GenerationJob::new(&id, kind, config.max_rounds, state.now());
    state.store().save_job(&job)?;
    drop(guard);

    let worker_state = state.clone();
    let started = job.clone();
    tokio::task::spawn_blocking(move || {
        run_job(&worker_state, &stored.example, &config, &spec, started);
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

fn run_job(
    state: &AppState,
    example: &WorkedExample,
    config: &PromptConfig,
    spec: &weat_core::ProviderSpec,
    mut job: GenerationJob,
) {
    let store = state.store();
    let save = |job: &GenerationJob| {
        if let Err(e) = store.save_job(job) {
            tracing::error!(example = %job.example_id, error = %e, "could not save job state");
        }
    };
    job.status = JobStatus::RoundRunning;
    job.updated_at = state.now();
    save(&job);

    let outcome = spec.connect().map_err(weat_core::PipelineError::from).and_then(|provider| {
        run_generation(example, config, provider.as_ref(), &state.config().policy, |transcript| {
            if let Err(e) = store.save_transcript(transcript) {
                tracing::error!(example = %example.id, error = %e, "could not save transcript");
            }
            job.rounds_done = transcript.rounds.len() as u32;
            job.transcript_ref = Some(TRANSCRIPT_FILE.to_owned());
            job.updated_at = state.now();
            save(&job);
        })
    });
    match outcome.map_err(|e| e.to_string()).and_then(|transcript| {
        store.save_transcript(&transcript).map_err(|e| e.to_string())
    }) {
        Ok(()) => {
            job.status = JobStatus::AwaitingReview;
            job.transcript_ref = Some(TRANSCRIPT_FILE.to_owned());
            job.updated_at = state.now();
        }
        Err(message) => {
            tracing::warn!(example = %example.id, error = %message, "generation failed");
            job.fail(message, state.now());
        }
    }
    save(&job);
}

#[derive(Debug, Serialize)]
struct RoundView {
    round: u32,
    response_text: String,
    dropped: usize,
}

#[derive(Debug, Serialize)]
struct JobView {
    job: GenerationJob,
    staged: Vec<StagedExplanation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity: Option<SimilarityReport>,
    rounds: Vec<RoundView>,
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    let job = state
        .store()
        .load_job(&id)?
        .ok_or_else(|| ServiceError::NotFound(format!("generation job for example {id:?}")))?;
    let transcript = match job.transcript_ref {
        Some(_) => state.store().load_transcript(&id)?,
        None => None,
    };
    let staged = match (&transcript, job.status) {
        (Some(transcript), JobStatus::AwaitingReview) => {
            let example = state.store().load(&id)?.example;
            staged_explanations(&example, transcript, &state.config().policy)?
        }
        _ => Vec::new(),
    };
    let (similarity, rounds) = match transcript {
        Some(GenerationTranscript { rounds, similarity, .. }) => (
            similarity,
            rounds
                .into_iter()
                .map(|round| RoundView {
                    round: round.completion.round,
                    response_text: round.completion.response_text,
                    dropped: round.parsed.dropped.len(),
                })
                .collect(),
        ),
        None => (None, Vec::new()),
    };
    Ok(Json(JobView {
        job,
        staged,
        similarity,
        rounds,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AcceptRequest {
    selections: Selections,
    /// When given, the accept fails if the example changed since.
    revision: Option<u64>,
}

async fn accept(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Option<Json<AcceptRequest>>, JsonRejection>,
) -> ApiResult<Json<ExampleView>> {
    let request = body?.map(|Json(r)| r).unwrap_or_default();
    let _guard = state.lock(&id).await;
    let stored = state.store().load(&id)?;
    if let Some(given) = request.revision {
        if given != stored.revision {
            return Err(ServiceError::VersionConflict {
                given,
                current: stored.revision,
            });
        }
    }
    let mut job = match state.store().load_job(&id)? {
        Some(job) if job.status == JobStatus::AwaitingReview => job,
        _ => return Err(ServiceError::NoStagedJob(id)),
    };
    let transcript = state
        .store()
        .load_transcript(&id)?
        .ok_or_else(|| ServiceError::NoStagedJob(id.clone()))?;
    let now = state.now();
    let staged = staged_explanations(&stored.example, &transcript, &state.config().policy)?;
    let example = accept_staged(&stored.example, &transcript, &request.selections, &state.config().policy, now)?;
    let revision = state.store().save(&example, stored.revision)?;

    let mut excluded: Vec<u32> = staged
        .iter()
        .map(|s| s.line)
        .filter(|line| !request.selections.includes(*line))
        .collect();
    excluded.dedup();
    job.excluded_lines = excluded;
    job.status = JobStatus::Complete;
    job.updated_at = now;
    state.store().save_job(&job)?;
    Ok(Json(ExampleView { revision, example }))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default = "default_format")]
    format: String,
}

fn default_format() -> String {
    "portable".to_owned()
}

async fn export(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query?;
    let example = state.store().load(&id)?.example;
    let document = match query.format.as_str() {
        "portable" => export_portable(&example)?,
        "pcex" => export_pcex(&example)?,
        other => {
            return Err(ServiceError::Validation(format!(
                "unknown export format {other:?}; expected portable or pcex"
            )))
        }
    };
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], document).into_response())
}
