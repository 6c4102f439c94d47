//! HTTP/JSON service exposing simulation, calibration, detection, evaluation
//! and benchmarking, plus live detection sessions fed packet by packet.
//!
//! Traces are uploaded once (`POST /v1/traces`, JSON-lines body) and then
//! referenced by id. All state lives in memory.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use sentinel_core::trace::Trace;
use sentinel_core::workflow::LiveDetector;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

mod error;
mod routes;

pub use error::ApiError;

/// Upper bound for request bodies; a 400 s trace at 250 packets/s and 56
/// subcarriers is roughly 250 MB of JSON.
pub const MAX_BODY_BYTES: usize = 2 << 30;

pub(crate) struct Session {
    pub live: LiveDetector,
    pub k: usize,
}

#[derive(Default)]
struct Inner {
    next_id: AtomicU64,
    traces: Mutex<HashMap<u64, Arc<Trace>>>,
    sessions: Mutex<HashMap<u64, Arc<Mutex<Session>>>>,
}

/// Shared in-memory store of uploaded traces and open sessions.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    fn next_id(&self) -> u64 {
        self.inner.next_id.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub(crate) fn insert_trace(&self, trace: Trace) -> u64 {
        let id = self.next_id();
        self.inner.traces.lock().unwrap().insert(id, Arc::new(trace));
        id
    }

    pub(crate) fn trace(&self, id: u64) -> Result<Arc<Trace>, ApiError> {
        self.inner.traces.lock().unwrap().get(&id).cloned().ok_or_else(|| ApiError::not_found("trace", id))
    }

    pub(crate) fn remove_trace(&self, id: u64) -> Result<Arc<Trace>, ApiError> {
        self.inner.traces.lock().unwrap().remove(&id).ok_or_else(|| ApiError::not_found("trace", id))
    }

    pub(crate) fn insert_session(&self, s: Session) -> u64 {
        let id = self.next_id();
        self.inner.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(s)));
        id
    }

    pub(crate) fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.inner.sessions.lock().unwrap().get(&id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    pub(crate) fn remove_session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.inner.sessions.lock().unwrap().remove(&id).ok_or_else(|| ApiError::not_found("session", id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/simulate", post(routes::simulate))
        .route("/v1/traces", post(routes::upload_trace))
        .route("/v1/traces/{id}", get(routes::trace_info).delete(routes::delete_trace))
        .route("/v1/calibrate", post(routes::calibrate))
        .route("/v1/detect", post(routes::detect))
        .route("/v1/eval", post(routes::eval))
        .route("/v1/grid", post(routes::grid))
        .route("/v1/bench", post(routes::bench))
        .route("/v1/sessions", post(routes::open_session))
        .route("/v1/sessions/{id}", get(routes::session_info).delete(routes::close_session))
        .route("/v1/sessions/{id}/packets", post(routes::push_packets))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(listener: TcpListener, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "serving");
    }
    axum::serve(listener, router(AppState::default())).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` (port 0 picks a free port) and serves in a background task.
pub async fn spawn(addr: SocketAddr) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, std::future::pending()));
    Ok((local, handle))
}
