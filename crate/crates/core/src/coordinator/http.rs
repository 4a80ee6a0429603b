//! JSON HTTP API and the `/stream` WebSocket.
//!
//! | route                      | body / result                          |
//! |----------------------------|----------------------------------------|
//! | `POST /events`             | [`EventRequest`] → [`DREvent`]         |
//! | `GET /events`              | all events                             |
//! | `GET /events/{id}`         | [`DREvent`]                            |
//! | `GET /agents`              | [`AgentSummary`] rows                  |
//! | `GET /agents/{id}/profiles`| dense [`ProfileSnapshot`]              |
//! | `POST /supply/trace`       | [`TraceUpload`]                        |
//! | `GET /stream?from_seq=n`   | WebSocket of [`StreamFrame`] JSON text |
//!
//! [`AgentSummary`]: super::AgentSummary
//! [`ProfileSnapshot`]: crate::profiles::ProfileSnapshot

use std::net::{SocketAddr, TcpListener as StdListener, ToSocketAddrs};
use std::thread::{self, JoinHandle};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot};

use super::core::StreamFrame;
use super::event::{DREvent, EventRequest};
use super::service::CoordinatorHandle;
use super::supply::{SupplyPolicy, SupplyTrace};
use super::CoordinatorError;

/// Body of `POST /supply/trace`. Without a policy the coordinator's
/// configured one is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceUpload {
    #[serde(flatten)]
    pub trace: SupplyTrace,
    #[serde(default)]
    pub policy: Option<SupplyPolicy>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct ApiError(CoordinatorError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            CoordinatorError::InvalidRequest(_) | CoordinatorError::Geo(_) | CoordinatorError::Profile(_) => {
                StatusCode::BAD_REQUEST
            }
            CoordinatorError::NotFound(_) => StatusCode::NOT_FOUND,
            CoordinatorError::ProfileIncomplete(_) => StatusCode::CONFLICT,
            CoordinatorError::Bus(_) => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

impl From<CoordinatorError> for ApiError {
    fn from(e: CoordinatorError) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(handle: CoordinatorHandle) -> Router {
    Router::new()
        .route("/events", post(create_event).get(list_events))
        .route("/events/{id}", get(get_event))
        .route("/agents", get(list_agents))
        .route("/agents/{id}/profiles", get(agent_profiles))
        .route("/supply/trace", post(load_trace))
        .route("/stream", get(stream))
        .with_state(handle)
}

async fn create_event(State(h): State<CoordinatorHandle>, Json(req): Json<EventRequest>) -> ApiResult<DREvent> {
    // publishing may block on a remote bus
    let ev = tokio::task::spawn_blocking(move || h.create_event(&req))
        .await
        .map_err(|e| CoordinatorError::InvalidRequest(e.to_string()))??;
    Ok(Json(ev))
}

async fn list_events(State(h): State<CoordinatorHandle>) -> Json<Vec<DREvent>> {
    Json(h.events())
}

async fn get_event(State(h): State<CoordinatorHandle>, Path(id): Path<String>) -> ApiResult<DREvent> {
    h.event(&id)
        .map(Json)
        .ok_or_else(|| CoordinatorError::NotFound(format!("event {id}")).into())
}

async fn list_agents(State(h): State<CoordinatorHandle>) -> Json<Vec<super::AgentSummary>> {
    Json(h.agents())
}

async fn agent_profiles(State(h): State<CoordinatorHandle>, Path(id): Path<String>) -> Response {
    match h.agent_profiles(&id) {
        Ok(p) => Json(p).into_response(),
        Err(e) => ApiError(e).into_response(),
    }
}

async fn load_trace(State(h): State<CoordinatorHandle>, Json(up): Json<TraceUpload>) -> Result<StatusCode, ApiError> {
    h.load_trace(up.trace, up.policy)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct StreamQuery {
    from_seq: Option<u64>,
}

async fn stream(State(h): State<CoordinatorHandle>, Query(q): Query<StreamQuery>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| pump_stream(socket, h, q.from_seq))
}

async fn pump_stream(mut socket: WebSocket, h: CoordinatorHandle, from_seq: Option<u64>) {
    let (backlog, mut rx) = h.subscribe_stream(from_seq);
    let mut last = 0;
    for f in backlog {
        last = f.seq;
        if send(&mut socket, &f).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                Ok(f) if f.seq <= last => {}
                Ok(f) => {
                    last = f.seq;
                    if send(&mut socket, &f).await.is_err() {
                        return;
                    }
                }
                // a slow client skips frames; the seq gap tells it so
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, f: &StreamFrame) -> Result<(), axum::Error> {
    let text = serde_json::to_string(f).expect("frame serializes");
    socket.send(Message::Text(text.into())).await
}

/// The HTTP server on its own thread and runtime.
pub struct HttpServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl HttpServer {
    pub fn bind(addr: impl ToSocketAddrs, handle: CoordinatorHandle) -> std::io::Result<Self> {
        let listener = StdListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            rt.block_on(async move {
                let Ok(listener) = tokio::net::TcpListener::from_std(listener) else {
                    return;
                };
                tokio::select! {
                    _ = axum::serve(listener, router(handle)) => {}
                    _ = rx => {}
                }
            });
            rt.shutdown_background();
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}
