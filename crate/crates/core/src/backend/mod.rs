//! Explanation generation behind a small trait, with a remote chat-completion
//! client and a deterministic offline mock.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::prompting::PromptBundle;

pub mod mock;
pub mod remote;

pub use mock::{CannedEntry, MockBackend};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy, API_KEY_ENV};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited; gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing API key: set {0}")]
    MissingApiKey(&'static str),
    #[error("backend failure: {0}")]
    Other(String),
}

/// One model and how many samples to draw from it per prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub samples: u32,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, samples: u32) -> Self {
        Self {
            name: name.into(),
            samples,
        }
    }
}

/// gpt-3.5-turbo sampled ten times, the two GPT-4 variants once each.
pub fn default_model_plan() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new("gpt-3.5-turbo", 10),
        ModelSpec::new("gpt-4", 1),
        ModelSpec::new("gpt-4-turbo-preview", 1),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub bundle: PromptBundle,
    pub model_name: String,
    pub sample_count: u32,
    pub temperature: Option<f64>,
    pub request_timeout: Duration,
}

impl GenerationRequest {
    pub fn new(bundle: PromptBundle, model_name: impl Into<String>, sample_count: u32) -> Self {
        Self {
            bundle,
            model_name: model_name.into(),
            sample_count,
            temperature: None,
            request_timeout: Duration::from_secs(120),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.sample_count == 0 {
            return Err(BackendError::InvalidRequest(
                "sample_count must be >= 1".into(),
            ));
        }
        if self.temperature.is_some_and(|t| t.is_nan() || t < 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    pub model_name: String,
    pub sample_index: u32,
    pub created_at: DateTime<Utc>,
    pub prompt_fingerprint: String,
    /// Temperature actually sent, `None` when the provider default applied.
    pub temperature: Option<f64>,
}

/// Something that turns a prompt into explanation text.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Produces sample `sample_index` for `request`.
    fn generate_sample(
        &self,
        request: &GenerationRequest,
        sample_index: u32,
    ) -> Result<Explanation, BackendError>;
}

/// Draws `request.sample_count` explanations, indices `0..n`.
pub fn generate(
    backend: &dyn Backend,
    request: &GenerationRequest,
) -> Result<Vec<Explanation>, BackendError> {
    request.validate()?;
    (0..request.sample_count)
        .map(|i| backend.generate_sample(request, i))
        .collect()
}
