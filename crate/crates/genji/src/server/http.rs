//! Routes.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use genji_core::diagram::render_pattern;
use genji_core::partition::enumerate_partitions;
use genji_core::ROUNDS;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, mpsc};

use super::tokens::{join_url, TokenError};
use super::{now_ms, AppState, CreateError, SessionSlot};

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/tokens", post(issue_token))
        .route("/api/sessions", post(start_session))
        .route("/api/sessions/{id}", get(session_status))
        .route("/api/sessions/{id}/bookmark.svg", get(bookmark))
        .route("/api/patterns", get(patterns))
        .route("/ws/{id}", get(ws_upgrade))
        .with_state(app)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "sessions": app.session_count(),
        "quarantined": app.quarantined(),
        "model_loaded": app.classifier.is_some(),
        "llm_mode": app.config.llm.mode,
    }))
}

#[derive(Deserialize)]
struct TokenRequest {
    sequence_id: String,
    #[serde(default = "yes")]
    single_use: bool,
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct TokenResponse {
    token: String,
    sequence_id: String,
    single_use: bool,
    join_url: String,
}

async fn issue_token(
    State(app): State<Arc<AppState>>,
    Json(req): Json<TokenRequest>,
) -> Result<(StatusCode, Json<TokenResponse>), ApiError> {
    if !app.sequences.contains_key(&req.sequence_id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_sequence",
            format!("no sequence {:?}", req.sequence_id),
        ));
    }
    let record = app
        .tokens
        .issue(None, &req.sequence_id, req.single_use, now_ms())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
    let join = join_url(&app.config.public_url, &record.token);
    Ok((
        StatusCode::CREATED,
        Json(TokenResponse {
            token: record.token,
            sequence_id: record.sequence_id,
            single_use: record.single_use,
            join_url: join,
        }),
    ))
}

#[derive(Deserialize)]
struct SessionRequest {
    token: String,
}

fn create_error(e: CreateError) -> ApiError {
    match e {
        CreateError::Token(TokenError::Unknown) => ApiError::new(StatusCode::NOT_FOUND, "unknown_token", e.to_string()),
        CreateError::Token(TokenError::Used) => ApiError::new(StatusCode::CONFLICT, "token_used", e.to_string()),
        CreateError::Sequence(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_sequence", e.to_string()),
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
    }
}

async fn start_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<SessionRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let app2 = app.clone();
    let slot = tokio::task::spawn_blocking(move || app2.create_session(&req.token))
        .await
        .expect("create task panicked")
        .map_err(create_error)?;
    Ok((StatusCode::CREATED, Json(status_json(&slot))))
}

fn status_json(slot: &SessionSlot) -> Value {
    let ctl = slot.controller.lock().expect("controller lock");
    let s = ctl.session();
    json!({
        "session_id": s.session_id,
        "sequence_id": s.sequence.id(),
        "phase": s.phase,
        "round": s.phase.round(),
        "tentative": s.tentative,
        "confirmed": s.confirmed,
        "player_pattern": s.player_partition().id(),
        "last_seq_no": s.last_seq_no(),
        "revealed": s.reveal.is_some(),
        "score": s.reveal.as_ref().map(|r| r.score),
        "ws_path": format!("/ws/{}", s.session_id),
    })
}

async fn session_status(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = app.slot(&id).ok_or_else(|| ApiError::no_session(&id))?;
    Ok(Json(status_json(&slot)))
}

async fn bookmark(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let ctl = slot.controller.lock().expect("controller lock");
    let report = ctl.session().reveal.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "not_revealed", "the pattern is revealed at the end of the game")
    })?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], report.player_diagram.to_svg()).into_response())
}

async fn patterns() -> Json<Value> {
    let list: Vec<Value> = enumerate_partitions(ROUNDS)
        .expect("five rounds")
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = render_pattern(p).expect("complete pattern");
            json!({ "index": i, "id": p.id(), "groups": p.group_count(), "svg": d.to_svg() })
        })
        .collect();
    Json(Value::Array(list))
}

async fn ws_upgrade(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let slot = app.slot(&id).ok_or_else(|| ApiError::no_session(&id))?;
    Ok(ws.on_upgrade(move |socket| client_loop(app, slot, socket)))
}

async fn client_loop(app: Arc<AppState>, slot: Arc<SessionSlot>, socket: WebSocket) {
    let (mut sink, mut incoming) = socket.split();
    let (mut rx, snapshot) = {
        let ctl = slot.controller.lock().expect("controller lock");
        (slot.tx.subscribe(), ctl.snapshot())
    };
    for (seq, msg) in snapshot {
        if sink.send(Message::Text(msg.to_json(&slot.id, seq).into())).await.is_err() {
            return;
        }
    }
    app.ensure_sensing(&slot);
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        loop {
            let text = tokio::select! {
                r = rx.recv() => match r {
                    Ok(t) => t,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                r = reply_rx.recv() => match r {
                    Some(t) => t,
                    None => break,
                },
            };
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(frame)) = incoming.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Binary(_) => {
                let err = super::protocol::ServerMessage::Error(super::protocol::ErrorPayload {
                    code: "malformed".into(),
                    message: "binary frames are not supported".into(),
                    phase: None,
                    retry_after_s: None,
                });
                let _ = reply_tx.send(err.to_json(&slot.id, 0));
                continue;
            }
            Message::Close(_) => break,
            _ => continue,
        };
        if let Some(err) = app.dispatch(&slot, text).await {
            let _ = reply_tx.send(err);
        }
    }
    drop(reply_tx);
    writer.abort();
}
