use std::io;
use std::sync::Mutex;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures_util::stream;
use sentinel_core::api::*;
use sentinel_core::detector::{evaluate_with_grace, Metrics, Timeline};
use sentinel_core::trace::{read_trace, write_header, write_packet, TraceMeta};
use sentinel_core::workflow::{self, BenchReport, GridCell, LiveDetector};
use sentinel_core::Error;
use tokio::sync::mpsc;

use crate::{ApiError, AppState, Session};

type ApiResult<T> = Result<T, ApiError>;

const CHUNK_BYTES: usize = 1 << 20;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorKind::Internal, e.to_string()))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    Ok(payload?.0)
}

/// Streams the synthesized trace as JSON lines while it is generated.
pub async fn simulate(payload: Result<Json<SimulateRequest>, JsonRejection>) -> ApiResult<Response> {
    let req = body(payload)?;
    let gen = req.config.generator(req.seed)?;
    let meta = TraceMeta {
        k_sub: req.config.synthesis.subcarriers,
        seed: Some(req.seed),
        labels: Some(gen.labels()),
    };
    let (tx, rx) = mpsc::channel::<io::Result<Bytes>>(8);
    tokio::task::spawn_blocking(move || {
        let mut buf = Vec::with_capacity(CHUNK_BYTES + 4096);
        if let Err(e) = write_header(&mut buf, &meta) {
            let _ = tx.blocking_send(Err(io::Error::other(e.to_string())));
            return;
        }
        for p in gen {
            if let Err(e) = write_packet(&mut buf, &p) {
                let _ = tx.blocking_send(Err(io::Error::other(e.to_string())));
                return;
            }
            if buf.len() >= CHUNK_BYTES && tx.blocking_send(Ok(Bytes::from(std::mem::take(&mut buf)))).is_err() {
                return;
            }
        }
        if !buf.is_empty() {
            let _ = tx.blocking_send(Ok(Bytes::from(buf)));
        }
    });
    let chunks = stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|c| (c, rx)) });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(chunks)).into_response())
}

fn info(id: u64, t: &sentinel_core::trace::Trace) -> TraceInfo {
    TraceInfo {
        id,
        k_sub: t.meta.k_sub,
        packets: t.packets.len(),
        seed: t.meta.seed,
        labels: t.meta.labels.clone(),
    }
}

pub async fn upload_trace(State(state): State<AppState>, bytes: Bytes) -> ApiResult<(StatusCode, Json<TraceInfo>)> {
    let trace = blocking(move || Ok(read_trace(&bytes[..])?)).await?;
    let summary = info(0, &trace);
    let id = state.insert_trace(trace);
    Ok((StatusCode::CREATED, Json(TraceInfo { id, ..summary })))
}

pub async fn trace_info(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<TraceInfo>> {
    Ok(Json(info(id, &*state.trace(id)?)))
}

pub async fn delete_trace(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    state.remove_trace(id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn calibrate(
    State(state): State<AppState>,
    payload: Result<Json<CalibrateRequest>, JsonRejection>,
) -> ApiResult<Json<CalibrateResponse>> {
    let req = body(payload)?;
    let trace = state.trace(req.trace)?;
    blocking(move || {
        let features = workflow::extract_features(&trace.packets, &req.feature, req.bundle_window)?;
        let cal = workflow::calibrate(&features, req.feature, &req.detector, trace.meta.k_sub, req.bundle_window, req.options)?;
        Ok(Json(CalibrateResponse { calibration: cal.file, recorded: cal.recorded }))
    })
    .await
}

pub async fn detect(State(state): State<AppState>, payload: Result<Json<DetectRequest>, JsonRejection>) -> ApiResult<Json<Timeline>> {
    let req = body(payload)?;
    let trace = state.trace(req.trace)?;
    blocking(move || Ok(Json(workflow::detect_packets(&trace.packets, trace.meta.k_sub, &req.calibration)?))).await
}

pub async fn eval(payload: Result<Json<EvalRequest>, JsonRejection>) -> ApiResult<Json<Metrics>> {
    let req = body(payload)?;
    Ok(Json(evaluate_with_grace(&req.timeline, &req.labels, req.grace)?))
}

pub async fn grid(State(state): State<AppState>, payload: Result<Json<GridRequest>, JsonRejection>) -> ApiResult<Json<Vec<GridCell>>> {
    let req = body(payload)?;
    let trace = state.trace(req.trace)?;
    blocking(move || {
        let labels = req.labels.as_deref().or(trace.meta.labels.as_deref());
        let cells = workflow::run_grid(&trace.packets, trace.meta.k_sub, labels, &req.features, &req.predictors, req.bundle_window)?;
        Ok(Json(cells))
    })
    .await
}

pub async fn bench(payload: Result<Json<BenchRequest>, JsonRejection>) -> ApiResult<Json<BenchReport>> {
    let req = body(payload)?;
    blocking(move || Ok(Json(workflow::bench(req.k, req.iters, req.predictor, req.test, req.seed)?))).await
}

pub async fn open_session(
    State(state): State<AppState>,
    payload: Result<Json<SessionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req = body(payload)?;
    let live = LiveDetector::new(&req.calibration)?;
    let k = req.calibration.k;
    let id = state.insert_session(Session { live, k });
    Ok((StatusCode::CREATED, Json(SessionInfo { id, k, steps: 0 })))
}

pub async fn session_info(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<SessionInfo>> {
    let s = state.session(id)?;
    let s = s.lock().unwrap();
    Ok(Json(SessionInfo { id, k: s.k, steps: s.live.steps() }))
}

fn run_batch(session: &Mutex<Session>, packets: Vec<sentinel_core::Packet>) -> Result<StepBatch, Error> {
    let mut s = session.lock().unwrap();
    let mut decisions = Vec::new();
    for p in packets {
        decisions.extend(s.live.push(p)?);
    }
    Ok(StepBatch { decisions })
}

pub async fn push_packets(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    payload: Result<Json<PacketBatch>, JsonRejection>,
) -> ApiResult<Json<StepBatch>> {
    let batch = body(payload)?;
    let session = state.session(id)?;
    blocking(move || Ok(Json(run_batch(&session, batch.packets)?))).await
}

/// Closes the session and returns the decision of the last open window.
pub async fn close_session(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<StepBatch>> {
    let session = state.remove_session(id)?;
    let mut s = session.lock().unwrap();
    Ok(Json(StepBatch { decisions: s.live.finish()?.into_iter().collect() }))
}
