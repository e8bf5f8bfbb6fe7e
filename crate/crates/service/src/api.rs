//! JSON endpoints under `/api/v1`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lexgap_core::campaign::{CampaignConfig, CampaignError, SessionInput, SessionStep};
use lexgap_core::ids::{CampaignId, EntryId, LanguageCode, WorkerId};
use lexgap_core::platform::{Command, CommandOutput, ErrorClass, Platform, PlatformError, TaskState};
use lexgap_core::workflow::WorkerRole;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::store::{ExecError, Store};
use crate::{AuthMode, ServiceConfig};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub struct AppState {
    store: Mutex<Store>,
    tokens: Mutex<HashMap<String, (WorkerId, u64)>>,
    config: ServiceConfig,
    clock: Clock,
}

impl AppState {
    pub fn new(store: Store, config: ServiceConfig, clock: Clock) -> Arc<Self> {
        Arc::new(Self {
            store: Mutex::new(store),
            tokens: Mutex::new(HashMap::new()),
            config,
            clock,
        })
    }

    pub fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn now(&self) -> u64 {
        (self.clock)()
    }

    fn exec(&self, command: Command) -> Result<CommandOutput, ApiError> {
        let now = self.now();
        self.store().execute(command, now).map_err(|e| match e {
            ExecError::Platform(p) => ApiError::from(p),
            ExecError::Store(s) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure", s.to_string()),
        })
    }

    fn read<T>(&self, f: impl FnOnce(&Platform) -> Result<T, PlatformError>) -> Result<T, ApiError> {
        f(self.store().platform()).map_err(ApiError::from)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn unauthenticated(message: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthenticated", message)
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedRequest", message)
    }
}

fn variant_name(debug: &str) -> &str {
    debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or(debug)
}

/// Name of the innermost error variant, e.g. `MissingDecision`.
pub fn error_code(e: &PlatformError) -> String {
    let debug = match e {
        PlatformError::Campaign(CampaignError::Workflow(w)) | PlatformError::Workflow(w) => format!("{w:?}"),
        PlatformError::Campaign(c) => format!("{c:?}"),
        PlatformError::Lexicon(l) => format!("{l:?}"),
        other => format!("{other:?}"),
    };
    variant_name(&debug).to_string()
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        let status = match e.class() {
            ErrorClass::BadRequest => StatusCode::BAD_REQUEST,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Gone => StatusCode::GONE,
        };
        Self {
            status,
            code: error_code(&e),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;
type Shared = State<Arc<AppState>>;

fn ok(value: Value) -> ApiResult {
    Ok(Json(value).into_response())
}

fn created(value: Value) -> ApiResult {
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

fn csv_response(body: String) -> ApiResult {
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

fn output_json(out: &CommandOutput) -> Value {
    serde_json::to_value(out).expect("outputs serialize")
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

fn text(body: &Bytes) -> Result<String, ApiError> {
    String::from_utf8(body.to_vec()).map_err(|_| ApiError::malformed("body is not UTF-8"))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

enum Caller {
    Admin,
    Worker(WorkerId),
}

fn caller(state: &AppState, headers: &HeaderMap) -> Result<Caller, ApiError> {
    let token = bearer(headers);
    if let (Some(t), Some(admin)) = (token, state.config.admin_token.as_deref()) {
        if t == admin {
            return Ok(Caller::Admin);
        }
    }
    if let Some(t) = token {
        let mut tokens = state.tokens.lock().unwrap_or_else(|p| p.into_inner());
        match tokens.get(t) {
            Some((worker, expiry)) if *expiry > state.now() => return Ok(Caller::Worker(worker.clone())),
            Some(_) => {
                tokens.remove(t);
                return Err(ApiError::unauthenticated("token expired"));
            }
            None => {}
        }
    }
    match state.config.auth_mode {
        AuthMode::Open if token.is_none() => Ok(Caller::Admin),
        _ => Err(ApiError::unauthenticated("missing or unknown bearer token")),
    }
}

fn admin(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    match caller(state, headers)? {
        Caller::Admin => Ok(()),
        Caller::Worker(_) => Err(ApiError::unauthenticated("admin token required")),
    }
}

fn worker(state: &AppState, headers: &HeaderMap) -> Result<WorkerId, ApiError> {
    match caller(state, headers)? {
        Caller::Worker(w) => Ok(w),
        Caller::Admin => Err(ApiError::unauthenticated("worker token required")),
    }
}

/// Session ids are only visible to the worker that owns them.
fn owned_session(state: &AppState, sid: &str, who: &WorkerId) -> Result<(), ApiError> {
    state.read(|p| {
        let rec = p.session(sid)?;
        if &rec.session.worker != who {
            return Err(PlatformError::UnknownSession(sid.to_string()));
        }
        Ok(())
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    let admin_routes = Router::new()
        .route("/experiments", post(create_experiment).get(list_experiments))
        .route("/experiments/{id}", get(get_experiment))
        .route("/experiments/{id}/close", post(close_experiment))
        .route("/experiments/{id}/finalize", post(finalize_experiment))
        .route("/experiments/{id}/reverse", post(reverse_experiment))
        .route("/experiments/{id}/report", get(report))
        .route("/experiments/{id}/source", post(upload_source).get(list_source))
        .route("/experiments/{id}/target", post(upload_target).get(list_target))
        .route("/experiments/{id}/acq-bank", post(upload_acq_bank))
        .route("/experiments/{id}/guidelines", get(guidelines).put(upload_guidelines))
        .route("/experiments/{id}/tasks", post(generate_tasks).get(list_tasks))
        .route("/experiments/{id}/tasks/{task}", get(get_task))
        .route("/experiments/{id}/tasks/{task}/assign", post(assign_task))
        .route("/experiments/{id}/tasks/{task}/close", post(close_task))
        .route("/experiments/{id}/tasks/{task}/validate", post(start_validation))
        .route("/experiments/{id}/tasks/{task}/filter", post(start_filter))
        .route(
            "/experiments/{id}/tasks/{task}/expert-sheet",
            get(download_sheet).put(upload_sheet),
        )
        .route("/workers", post(register_worker).get(list_workers))
        .route("/lexicon/{language}", get(export_lexicon))
        .route("/snapshot", post(snapshot));
    let worker_routes = Router::new()
        .route("/login", post(login))
        .route("/me/tasks", get(my_tasks))
        .route("/sessions", post(start_session))
        .route("/sessions/{sid}", get(get_session))
        .route("/sessions/{sid}/consent", post(consent))
        .route("/sessions/{sid}/withdraw", post(withdraw))
        .route("/sessions/{sid}/prompt", get(prompt))
        .route("/sessions/{sid}/answer", post(answer))
        .route("/sessions/{sid}/back", post(back));
    Router::new()
        .nest("/api/v1", admin_routes.merge(worker_routes))
        .with_state(state)
}

fn task_view(t: &TaskState) -> Value {
    let alpha = match &t.phase {
        lexgap_core::platform::TaskPhase::Resolved { alpha, .. } => alpha.and_then(|a| a.value()),
        _ => None,
    };
    let rounds: Vec<Value> = t
        .rounds
        .iter()
        .map(|r| {
            json!({
                "run_id": r.run_id,
                "participants": r.participants,
                "awaiting": r.awaiting,
                "sessions": r.sessions,
                "closed": r.closed,
            })
        })
        .collect();
    json!({
        "task_id": t.task.task_id,
        "items": t.task.items,
        "questions": t.task.items.len() - t.task.acq_items.len(),
        "acqs": t.task.acq_items.len(),
        "group": t.task.group,
        "phase": t.phase.name(),
        "rounds": rounds,
        "alpha": alpha,
    })
}

fn experiment_view(p: &Platform, id: &CampaignId) -> Result<Value, PlatformError> {
    let c = p.campaign(id)?;
    Ok(json!({
        "id": c.id,
        "description": c.description,
        "date": c.date,
        "lifecycle": c.lifecycle,
        "config": c.config,
        "reverse_of": c.reverse_of,
        "source_words": c.source.len(),
        "target_words": c.target.len(),
        "guidelines": c.guidelines.len(),
        "acq_items": c.acq_bank.len(),
        "tasks": c.tasks.iter().map(task_view).collect::<Vec<_>>(),
    }))
}

#[derive(Deserialize)]
struct CreateBody {
    description: String,
    date: String,
    #[serde(default)]
    config: Option<CampaignConfig>,
    #[serde(default)]
    source_language: Option<LanguageCode>,
    #[serde(default)]
    target_language: Option<LanguageCode>,
    #[serde(default)]
    field: Option<String>,
    #[serde(default)]
    questions_per_task: Option<usize>,
    #[serde(default)]
    acqs_per_task: Option<usize>,
}

impl CreateBody {
    fn config(self, fallback: Option<CampaignConfig>) -> Result<(String, String, CampaignConfig), ApiError> {
        let mut config = match (self.config, self.source_language, self.target_language, fallback) {
            (Some(c), _, _, _) => c,
            (None, Some(s), Some(t), _) => CampaignConfig::new(s, t, self.field.clone().unwrap_or_default()),
            (None, None, None, Some(f)) => f,
            _ => return Err(ApiError::malformed("need config or source_language and target_language")),
        };
        if let Some(q) = self.questions_per_task {
            config.questions_per_task = q;
        }
        if let Some(a) = self.acqs_per_task {
            config.acqs_per_task = a;
        }
        Ok((self.description, self.date, config))
    }
}

async fn create_experiment(State(s): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    admin(&s, &headers)?;
    let (description, date, config) = parse::<CreateBody>(&body)?.config(None)?;
    let out = s.exec(Command::CreateCampaign {
        description,
        date,
        config,
    })?;
    match out {
        CommandOutput::CampaignCreated { campaign } => {
            let view = s.read(|p| experiment_view(p, &campaign))?;
            created(view)
        }
        other => created(output_json(&other)),
    }
}

async fn list_experiments(State(s): Shared, headers: HeaderMap) -> ApiResult {
    admin(&s, &headers)?;
    let all = s.read(|p| p.campaigns.keys().map(|id| experiment_view(p, id)).collect::<Result<Vec<_>, _>>())?;
    ok(Value::Array(all))
}

async fn get_experiment(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    ok(s.read(|p| experiment_view(p, &CampaignId::new(id)))?)
}

async fn lifecycle_command(s: &AppState, command: Command, id: &CampaignId) -> ApiResult {
    s.exec(command)?;
    ok(s.read(|p| experiment_view(p, id))?)
}

async fn close_experiment(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    let campaign = CampaignId::new(id);
    lifecycle_command(&s, Command::CloseCampaign { campaign: campaign.clone() }, &campaign).await
}

async fn finalize_experiment(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    let campaign = CampaignId::new(id);
    lifecycle_command(&s, Command::FinalizeCampaign { campaign: campaign.clone() }, &campaign).await
}

async fn reverse_experiment(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    admin(&s, &headers)?;
    let from = CampaignId::new(id);
    let swapped = s.read(|p| {
        let mut c = p.campaign(&from)?.config.clone();
        std::mem::swap(&mut c.source_language, &mut c.target_language);
        Ok(c)
    })?;
    let (description, date, config) = parse::<CreateBody>(&body)?.config(Some(swapped))?;
    let out = s.exec(Command::CreateReverseCampaign {
        from,
        description,
        date,
        config,
    })?;
    match out {
        CommandOutput::CampaignCreated { campaign } => created(s.read(|p| experiment_view(p, &campaign))?),
        other => created(output_json(&other)),
    }
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn report(
    State(s): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult {
    admin(&s, &headers)?;
    let report = s.read(|p| p.report(&CampaignId::new(id)))?;
    match q.format.as_deref() {
        Some("json") => ok(serde_json::to_value(&report).expect("reports serialize")),
        None | Some("csv") => csv_response(report.to_csv()),
        Some(other) => Err(ApiError::malformed(format!("unknown report format {other}"))),
    }
}

async fn upload(s: &AppState, headers: &HeaderMap, make: impl FnOnce(String) -> Command, body: &Bytes) -> ApiResult {
    admin(s, headers)?;
    let out = s.exec(make(text(body)?))?;
    ok(output_json(&out))
}

async fn upload_source(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let campaign = CampaignId::new(id);
    upload(&s, &headers, |csv| Command::UploadSource { campaign, csv }, &body).await
}

async fn upload_target(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let campaign = CampaignId::new(id);
    upload(&s, &headers, |csv| Command::UploadTarget { campaign, csv }, &body).await
}

async fn upload_acq_bank(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let campaign = CampaignId::new(id);
    upload(&s, &headers, |csv| Command::UploadAcqBank { campaign, csv }, &body).await
}

async fn upload_guidelines(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let campaign = CampaignId::new(id);
    upload(&s, &headers, |csv| Command::UploadGuidelines { campaign, csv }, &body).await
}

fn entries_view(p: &Platform, ids: &[EntryId]) -> Value {
    let rows: Vec<Value> = ids
        .iter()
        .enumerate()
        .filter_map(|(n, id)| {
            p.lexicon
                .entry(id)
                .map(|e| json!({ "number": n + 1, "id": e.id, "word": e.word, "gloss": e.gloss }))
        })
        .collect();
    Value::Array(rows)
}

async fn list_source(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    ok(s.read(|p| Ok(entries_view(p, &p.campaign(&CampaignId::new(id))?.source)))?)
}

async fn list_target(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    ok(s.read(|p| Ok(entries_view(p, &p.campaign(&CampaignId::new(id))?.target)))?)
}

async fn guidelines(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    caller(&s, &headers)?;
    let g = s.read(|p| Ok(p.campaign(&CampaignId::new(id))?.guidelines.clone()))?;
    ok(serde_json::to_value(g).expect("guidelines serialize"))
}

async fn generate_tasks(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    let out = s.exec(Command::GenerateTasks {
        campaign: CampaignId::new(id),
    })?;
    created(output_json(&out))
}

async fn list_tasks(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    let tasks = s.read(|p| Ok(p.campaign(&CampaignId::new(id))?.tasks.iter().map(task_view).collect::<Vec<_>>()))?;
    ok(Value::Array(tasks))
}

fn find_task<'a>(p: &'a Platform, id: &CampaignId, task: &str) -> Result<&'a TaskState, PlatformError> {
    p.campaign(id)?
        .tasks
        .iter()
        .find(|t| t.task.task_id == task)
        .ok_or_else(|| PlatformError::UnknownTask(task.to_string()))
}

async fn get_task(State(s): Shared, headers: HeaderMap, Path((id, task)): Path<(String, String)>) -> ApiResult {
    admin(&s, &headers)?;
    ok(s.read(|p| find_task(p, &CampaignId::new(id), &task).map(task_view))?)
}

fn task_phase_reply(s: &AppState, id: &CampaignId, task: &str) -> ApiResult {
    ok(s.read(|p| find_task(p, id, task).map(task_view))?)
}

#[derive(Deserialize)]
struct AssignBody {
    group: Vec<WorkerId>,
}

async fn assign_task(
    State(s): Shared,
    headers: HeaderMap,
    Path((id, task)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    admin(&s, &headers)?;
    let body: AssignBody = parse(&body)?;
    let campaign = CampaignId::new(id);
    s.exec(Command::AssignTask {
        campaign: campaign.clone(),
        task: task.clone(),
        group: body.group,
    })?;
    task_phase_reply(&s, &campaign, &task)
}

async fn close_task(State(s): Shared, headers: HeaderMap, Path((id, task)): Path<(String, String)>) -> ApiResult {
    admin(&s, &headers)?;
    let campaign = CampaignId::new(id);
    s.exec(Command::CloseTask {
        campaign: campaign.clone(),
        task: task.clone(),
    })?;
    task_phase_reply(&s, &campaign, &task)
}

#[derive(Deserialize)]
struct ValidateBody {
    #[serde(default)]
    reserve: Vec<WorkerId>,
    expert: WorkerId,
}

async fn start_validation(
    State(s): Shared,
    headers: HeaderMap,
    Path((id, task)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    admin(&s, &headers)?;
    let body: ValidateBody = parse(&body)?;
    let campaign = CampaignId::new(id);
    s.exec(Command::StartValidation {
        campaign: campaign.clone(),
        task: task.clone(),
        reserve: body.reserve,
        expert: body.expert,
    })?;
    task_phase_reply(&s, &campaign, &task)
}

#[derive(Deserialize)]
struct FilterBody {
    expert: WorkerId,
}

async fn start_filter(
    State(s): Shared,
    headers: HeaderMap,
    Path((id, task)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    admin(&s, &headers)?;
    let body: FilterBody = parse(&body)?;
    let campaign = CampaignId::new(id);
    s.exec(Command::StartCrowdFilter {
        campaign: campaign.clone(),
        task: task.clone(),
        expert: body.expert,
    })?;
    task_phase_reply(&s, &campaign, &task)
}

async fn download_sheet(State(s): Shared, headers: HeaderMap, Path((id, task)): Path<(String, String)>) -> ApiResult {
    admin(&s, &headers)?;
    csv_response(s.read(|p| p.expert_sheet_csv(&CampaignId::new(id), &task))?)
}

async fn upload_sheet(
    State(s): Shared,
    headers: HeaderMap,
    Path((id, task)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    admin(&s, &headers)?;
    let campaign = CampaignId::new(id);
    s.exec(Command::UploadExpertSheet {
        campaign: campaign.clone(),
        task: task.clone(),
        csv: text(&body)?,
    })?;
    task_phase_reply(&s, &campaign, &task)
}

#[derive(Deserialize)]
struct WorkerBody {
    worker: WorkerId,
    role: WorkerRole,
}

async fn register_worker(State(s): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    admin(&s, &headers)?;
    let body: WorkerBody = parse(&body)?;
    let worker = body.worker.clone();
    s.exec(Command::RegisterWorker {
        worker: body.worker,
        role: body.role,
    })?;
    let w = s.read(|p| p.workers.get(&worker).cloned().ok_or(PlatformError::UnknownWorker(worker)))?;
    created(serde_json::to_value(w).expect("workers serialize"))
}

async fn list_workers(State(s): Shared, headers: HeaderMap) -> ApiResult {
    admin(&s, &headers)?;
    let all = s.read(|p| Ok(p.workers.values().cloned().collect::<Vec<_>>()))?;
    ok(serde_json::to_value(all).expect("workers serialize"))
}

async fn export_lexicon(State(s): Shared, headers: HeaderMap, Path(language): Path<String>) -> ApiResult {
    admin(&s, &headers)?;
    let lang = LanguageCode::new(&language).map_err(|e| ApiError::malformed(e.to_string()))?;
    let doc = s.read(|p| p.export_lexicon(&lang))?;
    ok(serde_json::to_value(doc).expect("documents serialize"))
}

async fn snapshot(State(s): Shared, headers: HeaderMap) -> ApiResult {
    admin(&s, &headers)?;
    let seq = s
        .store()
        .snapshot()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure", e.to_string()))?;
    ok(json!({ "seq": seq }))
}

#[derive(Deserialize)]
struct LoginBody {
    worker: WorkerId,
}

async fn login(State(s): Shared, body: Bytes) -> ApiResult {
    let body: LoginBody = parse(&body)?;
    let known = s.read(|p| Ok(p.workers.contains_key(&body.worker)))?;
    if !known {
        return Err(ApiError::unauthenticated("unknown worker"));
    }
    let token = hex::encode(rand::rng().random::<[u8; 24]>());
    let expires_at_ms = s.now() + s.config.token_ttl_ms;
    s.tokens
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(token.clone(), (body.worker.clone(), expires_at_ms));
    ok(json!({ "token": token, "worker": body.worker, "expires_at_ms": expires_at_ms }))
}

async fn my_tasks(State(s): Shared, headers: HeaderMap) -> ApiResult {
    let who = worker(&s, &headers)?;
    let open = s.read(|p| {
        let mut out = Vec::new();
        for c in p.campaigns.values() {
            if c.lifecycle != lexgap_core::platform::Lifecycle::Active {
                continue;
            }
            for t in &c.tasks {
                let Some(round) = t.rounds.last() else { continue };
                if round.closed || !round.awaiting.contains(&who) {
                    continue;
                }
                out.push(json!({
                    "experiment": c.id,
                    "task": t.task.task_id,
                    "questions": t.task.items.len(),
                    "session": round.sessions.get(&who),
                }));
            }
        }
        Ok(out)
    })?;
    ok(Value::Array(open))
}

#[derive(Deserialize)]
struct SessionBody {
    experiment: CampaignId,
    task: String,
}

async fn start_session(State(s): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let who = worker(&s, &headers)?;
    let body: SessionBody = parse(&body)?;
    let out = s.exec(Command::StartSession {
        campaign: body.experiment,
        task: body.task,
        worker: who,
        at_ms: s.now(),
    })?;
    created(output_json(&out))
}

fn session_view(p: &Platform, sid: &str) -> Result<Value, PlatformError> {
    let rec = p.session(sid)?;
    let se = &rec.session;
    Ok(json!({
        "session": se.session_id,
        "experiment": rec.campaign,
        "task": se.task_id,
        "worker": se.worker,
        "position": se.cursor,
        "total": se.items.len(),
        "step": se.step,
        "consent": se.consent,
        "withdrawn": se.withdrawn,
        "complete": se.is_complete(),
    }))
}

async fn get_session(State(s): Shared, headers: HeaderMap, Path(sid): Path<String>) -> ApiResult {
    let who = worker(&s, &headers)?;
    owned_session(&s, &sid, &who)?;
    ok(s.read(|p| session_view(p, &sid))?)
}

#[derive(Deserialize)]
struct ConsentBody {
    accept: bool,
}

async fn consent(State(s): Shared, headers: HeaderMap, Path(sid): Path<String>, body: Bytes) -> ApiResult {
    let who = worker(&s, &headers)?;
    let body: ConsentBody = parse(&body)?;
    owned_session(&s, &sid, &who)?;
    s.exec(Command::Consent {
        session: sid.clone(),
        accept: body.accept,
        at_ms: s.now(),
    })?;
    ok(s.read(|p| session_view(p, &sid))?)
}

async fn withdraw(State(s): Shared, headers: HeaderMap, Path(sid): Path<String>) -> ApiResult {
    let who = worker(&s, &headers)?;
    owned_session(&s, &sid, &who)?;
    s.exec(Command::Withdraw {
        session: sid.clone(),
        at_ms: s.now(),
    })?;
    ok(s.read(|p| session_view(p, &sid))?)
}

async fn prompt(State(s): Shared, headers: HeaderMap, Path(sid): Path<String>) -> ApiResult {
    let who = worker(&s, &headers)?;
    owned_session(&s, &sid, &who)?;
    let prompt = s.read(|p| p.next_prompt(&sid))?;
    ok(serde_json::to_value(prompt).expect("prompts serialize"))
}

#[derive(Deserialize)]
struct AnswerBody {
    #[serde(default)]
    item: Option<EntryId>,
    #[serde(default)]
    step: Option<SessionStep>,
    input: SessionInput,
}

fn submit(s: &AppState, sid: String, item: Option<EntryId>, step: Option<SessionStep>, input: SessionInput) -> ApiResult {
    let (current_item, current_step) = s.read(|p| {
        let se = &p.session(&sid)?.session;
        Ok((se.current_item().cloned(), se.step))
    })?;
    let item = item
        .or(current_item)
        .ok_or_else(|| ApiError::from(PlatformError::Campaign(CampaignError::SessionDone)))?;
    let out = s.exec(Command::SubmitAnswer {
        session: sid,
        item,
        step: step.unwrap_or(current_step),
        input,
        at_ms: s.now(),
    })?;
    ok(output_json(&out))
}

async fn answer(State(s): Shared, headers: HeaderMap, Path(sid): Path<String>, body: Bytes) -> ApiResult {
    let who = worker(&s, &headers)?;
    let body: AnswerBody = parse(&body)?;
    owned_session(&s, &sid, &who)?;
    submit(&s, sid, body.item, body.step, body.input)
}

async fn back(State(s): Shared, headers: HeaderMap, Path(sid): Path<String>) -> ApiResult {
    let who = worker(&s, &headers)?;
    owned_session(&s, &sid, &who)?;
    submit(&s, sid, None, None, SessionInput::Back)
}
