//! Typed wrapper over the experiment server's JSON endpoints.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use mmct_core::api::{
    ApiError, BatchResponse, CompareRequest, Health, RunRequest, SessionInfo, SessionRequest, StepRequest,
    StepResponse, SweepRequest, ValidateRequest, ValidateResponse,
};
use mmct_core::metrics::RunReport;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Transport { url: String, source: reqwest::Error },
    #[error("{}", render(.error, .details))]
    Api {
        status: StatusCode,
        error: String,
        details: Vec<String>,
    },
}

fn render(error: &str, details: &[String]) -> String {
    if details.is_empty() {
        error.to_string()
    } else {
        format!("{error}:\n  {}", details.join("\n  "))
    }
}

impl ClientError {
    /// HTTP status of a server-side rejection.
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport { .. } => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let url = format!("{}{path}", self.base);
        let transport = |source| ClientError::Transport { url: url.clone(), source };
        let mut req = self.http.request(method, &url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await.map_err(transport)?;
        let status = resp.status();
        if status.is_success() {
            return resp.json().await.map_err(transport);
        }
        let text = resp.text().await.map_err(transport)?;
        let err: ApiError = serde_json::from_str(&text).unwrap_or(ApiError {
            error: format!("{status}: {text}"),
            details: Vec::new(),
        });
        Err(ClientError::Api {
            status,
            error: err.error,
            details: err.details,
        })
    }

    pub async fn health(&self) -> Result<Health> {
        self.call::<(), _>(Method::GET, "/health", None).await
    }

    /// Validation failures come back as `valid: false` with the error list.
    pub async fn validate(&self, config: &str) -> Result<ValidateResponse> {
        let req = ValidateRequest { config: config.into() };
        let url = format!("{}/v1/config/validate", self.base);
        let transport = |source| ClientError::Transport { url: url.clone(), source };
        let resp = self.http.post(&url).json(&req).send().await.map_err(transport)?;
        let status = resp.status();
        if status.is_success() || status == StatusCode::UNPROCESSABLE_ENTITY {
            return resp.json().await.map_err(transport);
        }
        Err(ClientError::Api {
            status,
            error: resp.text().await.unwrap_or_default(),
            details: Vec::new(),
        })
    }

    pub async fn run(&self, req: &RunRequest) -> Result<RunReport> {
        self.call(Method::POST, "/v1/run", Some(req)).await
    }

    pub async fn compare(&self, req: &CompareRequest) -> Result<BatchResponse> {
        self.call(Method::POST, "/v1/compare", Some(req)).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<BatchResponse> {
        self.call(Method::POST, "/v1/sweep", Some(req)).await
    }

    pub async fn create_session(&self, req: &SessionRequest) -> Result<SessionInfo> {
        self.call(Method::POST, "/v1/sessions", Some(req)).await
    }

    pub async fn session(&self, id: u64) -> Result<SessionInfo> {
        self.call::<(), _>(Method::GET, &format!("/v1/sessions/{id}"), None).await
    }

    pub async fn step(&self, id: u64, intervals: u32) -> Result<StepResponse> {
        let req = StepRequest { intervals };
        self.call(Method::POST, &format!("/v1/sessions/{id}/step"), Some(&req)).await
    }

    pub async fn delete_session(&self, id: u64) -> Result<()> {
        let url = format!("{}/v1/sessions/{id}", self.base);
        let transport = |source| ClientError::Transport { url: url.clone(), source };
        let resp = self.http.delete(&url).send().await.map_err(transport)?;
        let status = resp.status();
        if status.is_success() {
            return Ok(());
        }
        let err: ApiError = resp.json().await.unwrap_or_default();
        Err(ClientError::Api {
            status,
            error: err.error,
            details: err.details,
        })
    }
}
