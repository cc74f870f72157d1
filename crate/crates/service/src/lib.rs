//! HTTP session service for decision-aware elicitation.
//!
//! | method | path                        | effect                                  |
//! |--------|-----------------------------|-----------------------------------------|
//! | POST   | `/sessions`                 | create a session from CSV + config      |
//! | GET    | `/sessions/{id}`            | session summary                         |
//! | GET    | `/sessions/{id}/next-query` | issue (or repeat) the pending query     |
//! | POST   | `/sessions/{id}/answers`    | answer the pending query                |
//! | GET    | `/sessions/{id}/history`    | answered queries and γ̂/MMD trajectories |
//! | DELETE | `/sessions/{id}`            | close the session                       |
//!
//! Mutations of one session are serialised; a mutation that finds the
//! session busy gets 409 instead of queueing. Reads wait for a running
//! mutation to finish.

pub mod error;
pub mod journal;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock as StdRwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use dmaware_core::active_learning::Answer;
use dmaware_core::ExecMode;
use tokio::sync::{OwnedRwLockWriteGuard, RwLock};

pub use error::ApiError;
pub use journal::{Event, Journal};
pub use session::{
    selection_seed, AnswerOutcome, Estimate, HistoryEntry, HistoryView, QueryCard, Session, SessionConfig,
    SessionSummary, Status,
};

/// Environment variable holding the bind address, e.g. `127.0.0.1:8080`.
pub const BIND_ENV: &str = "DMAWARE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

type Shared = Arc<RwLock<Session>>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<StdRwLock<HashMap<String, Shared>>>,
    journal: Option<Journal>,
    exec: ExecMode,
}

impl AppState {
    pub fn new(exec: ExecMode) -> Self {
        Self {
            sessions: Arc::default(),
            journal: None,
            exec,
        }
    }

    /// State backed by a journal directory; journalled sessions are replayed.
    pub fn with_journal(dir: impl Into<PathBuf>, exec: ExecMode) -> std::io::Result<Self> {
        let journal = Journal::open(dir)?;
        let restored = journal.replay_all(exec)?;
        let n = restored.len();
        let map = restored
            .into_iter()
            .map(|s| (s.id().to_string(), Arc::new(RwLock::new(s))))
            .collect();
        if n > 0 {
            tracing::info!(sessions = n, dir = %journal.dir().display(), "restored sessions from journal");
        }
        Ok(Self {
            sessions: Arc::new(StdRwLock::new(map)),
            journal: Some(journal),
            exec,
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    fn lookup(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn lock_for_write(&self, id: &str) -> Result<OwnedRwLockWriteGuard<Session>, ApiError> {
        self.lookup(id)?
            .try_write_owned()
            .map_err(|_| ApiError::conflict("session is busy with another request"))
    }

    fn record(&self, id: &str, event: &Event) -> Result<(), ApiError> {
        match &self.journal {
            Some(j) => j.append(id, event).map_err(|e| {
                tracing::error!(session = %id, "journal append failed: {e}");
                ApiError::internal(format!("journal append failed: {e}"))
            }),
            None => Ok(()),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/next-query", get(next_query))
        .route("/sessions/{id}/answers", post(submit_answer))
        .route("/sessions/{id}/history", get(get_history))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let Json(config) = body?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = {
        let (id, config) = (id.clone(), config.clone());
        blocking(move || Session::create(id, config)).await?
    };
    app.record(&id, &Event::Created { config: Box::new(config) })?;
    let summary = session.summary();
    app.sessions
        .write()
        .expect("session map lock")
        .insert(id.clone(), Arc::new(RwLock::new(session)));
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let s = app.lookup(&id)?;
    let guard = s.read().await;
    Ok(Json(guard.summary()))
}

async fn get_history(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<HistoryView>, ApiError> {
    let s = app.lookup(&id)?;
    let guard = s.read().await;
    Ok(Json(guard.history_view()))
}

async fn next_query(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<QueryCard>, ApiError> {
    let mut guard = app.lock_for_write(&id)?;
    // The journal is written in the same task as the mutation so a dropped
    // connection cannot separate the two.
    let card = blocking(move || {
        let (card, fresh) = guard.next_query(app.exec)?;
        if fresh {
            app.record(&id, &Event::Queried { query: card.query })?;
        }
        Ok(card)
    })
    .await?;
    Ok(Json(card))
}

async fn submit_answer(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Answer>, JsonRejection>,
) -> Result<Json<AnswerOutcome>, ApiError> {
    let mut guard = app.lock_for_write(&id)?;
    let Json(answer) = body.map_err(|r| match r {
        // A well-formed body of the wrong shape is a type mismatch.
        JsonRejection::JsonDataError(e) => ApiError::unprocessable(e.body_text()),
        other => other.into(),
    })?;
    let outcome = blocking(move || {
        let timestamp_ms = session::now_ms();
        let outcome = guard.submit_answer(answer, timestamp_ms)?;
        app.record(&id, &Event::Answered { answer, timestamp_ms })?;
        Ok(outcome)
    })
    .await?;
    Ok(Json(outcome))
}

async fn close_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let mut guard = app.lock_for_write(&id)?;
    guard.close()?;
    app.record(&id, &Event::Closed)?;
    tracing::info!(session = %id, "session closed");
    Ok(Json(guard.summary()))
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
