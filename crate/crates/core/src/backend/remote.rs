//! Chat-completion client over HTTP(S).
//!
//! Sends `{model, messages: [system, user], temperature?}` and reads
//! `choices[0].message.content`. 429 and 5xx responses are retried with
//! capped exponential backoff; `Retry-After` (seconds) is honoured up to the cap.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, Explanation, GenerationRequest};

pub const API_KEY_ENV: &str = "HDL_EXPLAIN_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.base_delay
            .checked_mul(factor)
            .unwrap_or(self.max_delay)
            .min(self.max_delay)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: String,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl fmt::Debug for RemoteConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteConfig")
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .field("max_in_flight", &self.max_in_flight)
            .field("retry", &self.retry)
            .finish()
    }
}

impl RemoteConfig {
    /// Reads the key from `HDL_EXPLAIN_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(BackendError::MissingApiKey(API_KEY_ENV))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        })
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    permits: Permits,
}

enum Attempt {
    Done(String),
    Retry {
        status: u16,
        after: Option<Duration>,
        body: String,
    },
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits::new(config.max_in_flight);
        Self {
            config,
            agent,
            permits,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// The JSON body sent for `request`.
    pub fn payload(request: &GenerationRequest) -> Value {
        let mut body = json!({
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.bundle.system_text},
                {"role": "user", "content": request.bundle.user_text},
            ],
        });
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn attempt(&self, request: &GenerationRequest, body: &Value) -> Result<Attempt, BackendError> {
        let _permit = self.permits.acquire();
        let result = self
            .agent
            .post(&self.config.endpoint)
            .config()
            .timeout_global(Some(request.request_timeout))
            .build()
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(BackendError::Timeout),
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Err(BackendError::Timeout),
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        match status {
            200..=299 => Ok(Attempt::Done(text)),
            401 | 403 => Err(BackendError::Auth { status }),
            429 | 500..=599 => Ok(Attempt::Retry {
                status,
                after,
                body: text,
            }),
            _ => Err(BackendError::Http { status, body: text }),
        }
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion response.
pub fn parse_completion(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))?;
    if content.trim().is_empty() {
        return Err(BackendError::Malformed("empty message content".into()));
    }
    Ok(content.to_owned())
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn generate_sample(
        &self,
        request: &GenerationRequest,
        sample_index: u32,
    ) -> Result<Explanation, BackendError> {
        request.validate()?;
        let body = Self::payload(request);
        let policy = self.config.retry;
        let max_attempts = policy.max_attempts.max(1);
        let mut attempts = 0;
        let text = loop {
            attempts += 1;
            match self.attempt(request, &body)? {
                Attempt::Done(text) => break parse_completion(&text)?,
                Attempt::Retry {
                    status,
                    after,
                    body,
                } => {
                    if attempts >= max_attempts {
                        return Err(if status == 429 {
                            BackendError::RateLimited { attempts }
                        } else {
                            BackendError::Http { status, body }
                        });
                    }
                    let wait = after
                        .map(|a| a.min(policy.max_delay))
                        .unwrap_or_else(|| policy.delay(attempts - 1));
                    thread::sleep(wait);
                }
            }
        };
        Ok(Explanation {
            text,
            model_name: request.model_name.clone(),
            sample_index,
            created_at: Utc::now(),
            prompt_fingerprint: request.bundle.fingerprint.clone(),
            temperature: request.temperature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(700),
        };
        let d: Vec<u128> = (0..5).map(|i| p.delay(i).as_millis()).collect();
        assert_eq!(d, vec![100, 200, 400, 700, 700]);
        assert_eq!(p.delay(200), Duration::from_millis(700));
    }

    #[test]
    fn debug_output_hides_the_key() {
        let c = RemoteConfig {
            endpoint: "http://x".into(),
            api_key: "sk-secret".into(),
            max_in_flight: 1,
            retry: RetryPolicy::default(),
        };
        assert!(!format!("{c:?}").contains("sk-secret"));
    }

    #[test]
    fn completion_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(parse_completion(ok).unwrap(), "hi");
        assert!(matches!(
            parse_completion("not json"),
            Err(BackendError::Malformed(_))
        ));
        assert!(matches!(
            parse_completion(r#"{"choices":[]}"#),
            Err(BackendError::Malformed(_))
        ));
        let empty = r#"{"choices":[{"message":{"content":"  "}}]}"#;
        assert!(matches!(
            parse_completion(empty),
            Err(BackendError::Malformed(_))
        ));
    }
}
