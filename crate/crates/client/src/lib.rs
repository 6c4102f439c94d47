//! Async client for the sentinel HTTP service.

use std::io::Write;

use reqwest::{Method, RequestBuilder, Response};
use sentinel_core::api::*;
use sentinel_core::detector::{Metrics, Timeline};
use sentinel_core::workflow::{BenchReport, GridCell};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{}", .body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("request to the sentinel service failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClientError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::Api { body, .. } => body.kind,
            ClientError::Transport(_) | ClientError::Io(_) => ErrorKind::Internal,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn checked(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            kind: if status.is_client_error() { ErrorKind::Usage } else { ErrorKind::Internal },
            message: format!("HTTP {status}: {text}"),
        });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    async fn send_json<B: Serialize + ?Sized, T: DeserializeOwned>(&self, method: Method, path: &str, body: &B) -> Result<T> {
        let resp = self.request(method, path).json(body).send().await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    async fn get_json<T: DeserializeOwned>(&self, method: Method, path: &str) -> Result<T> {
        let resp = self.request(method, path).send().await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<()> {
        Self::checked(self.request(Method::GET, "/healthz").send().await?).await?;
        Ok(())
    }

    /// Writes the simulated trace (JSON lines) to `out` as it streams in and
    /// returns the number of bytes written.
    pub async fn simulate_to<W: Write>(&self, req: &SimulateRequest, mut out: W) -> Result<u64> {
        let resp = self.request(Method::POST, "/v1/simulate").json(req).send().await?;
        let mut resp = Self::checked(resp).await?;
        let mut written = 0u64;
        while let Some(chunk) = resp.chunk().await? {
            out.write_all(&chunk)?;
            written += chunk.len() as u64;
        }
        out.flush()?;
        Ok(written)
    }

    /// Uploads a JSON-lines trace.
    pub async fn upload_trace(&self, body: Vec<u8>) -> Result<TraceInfo> {
        let resp = self
            .request(Method::POST, "/v1/traces")
            .header(reqwest::header::CONTENT_TYPE, "application/x-ndjson")
            .body(body)
            .send()
            .await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    pub async fn trace_info(&self, id: u64) -> Result<TraceInfo> {
        self.get_json(Method::GET, &format!("/v1/traces/{id}")).await
    }

    pub async fn delete_trace(&self, id: u64) -> Result<()> {
        Self::checked(self.request(Method::DELETE, &format!("/v1/traces/{id}")).send().await?).await?;
        Ok(())
    }

    pub async fn calibrate(&self, req: &CalibrateRequest) -> Result<CalibrateResponse> {
        self.send_json(Method::POST, "/v1/calibrate", req).await
    }

    pub async fn detect(&self, req: &DetectRequest) -> Result<Timeline> {
        self.send_json(Method::POST, "/v1/detect", req).await
    }

    pub async fn eval(&self, req: &EvalRequest) -> Result<Metrics> {
        self.send_json(Method::POST, "/v1/eval", req).await
    }

    pub async fn grid(&self, req: &GridRequest) -> Result<Vec<GridCell>> {
        self.send_json(Method::POST, "/v1/grid", req).await
    }

    pub async fn bench(&self, req: &BenchRequest) -> Result<BenchReport> {
        self.send_json(Method::POST, "/v1/bench", req).await
    }

    pub async fn open_session(&self, req: &SessionRequest) -> Result<SessionInfo> {
        self.send_json(Method::POST, "/v1/sessions", req).await
    }

    pub async fn session_info(&self, id: u64) -> Result<SessionInfo> {
        self.get_json(Method::GET, &format!("/v1/sessions/{id}")).await
    }

    pub async fn push_packets(&self, id: u64, batch: &PacketBatch) -> Result<StepBatch> {
        self.send_json(Method::POST, &format!("/v1/sessions/{id}/packets"), batch).await
    }

    /// Ends the session, returning the decision for its last open window.
    pub async fn close_session(&self, id: u64) -> Result<StepBatch> {
        self.get_json(Method::DELETE, &format!("/v1/sessions/{id}")).await
    }
}
