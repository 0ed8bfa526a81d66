//! Clients for hosted reasoning and embedding endpoints.
//!
//! The HTTP wire format is a small JSON contract:
//! reasoner `POST {model, system_text, user_text}` answers `{completion}`;
//! embedder `POST {model, modality, payload}` answers `{vector, dimension}`,
//! where an image payload is base64 PNG/SVG bytes and a text payload is the
//! raw narrative. Both send `Authorization: Bearer <token>`.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One failed call, before retry bookkeeping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CallError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl CallError {
    /// Timeouts, 429, 5xx and transport failures are worth another try.
    pub fn is_retryable(&self) -> bool {
        match self {
            CallError::Timeout | CallError::Transport(_) => true,
            CallError::Http { status, .. } => *status == 429 || *status >= 500,
            CallError::Auth(_) | CallError::Protocol(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RemoteError {
    #[error("credentials missing: environment variable {0} is not set")]
    MissingToken(String),
    #[error("authentication rejected (HTTP {status}) after {attempts} attempt(s)")]
    Auth { status: u16, attempts: u32 },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("remote call failed after {attempts} attempt(s): {message}")]
    Failed { message: String, attempts: u32 },
    #[error("remote returned an unusable result: {0}")]
    Integrity(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub reasoner_endpoint: String,
    pub reasoner_model: String,
    pub embed_endpoint: String,
    pub embed_model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub max_in_flight: usize,
    pub requests_per_minute: u32,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            reasoner_endpoint: "http://127.0.0.1:8080/v1/reason".into(),
            reasoner_model: "deepseek-r1".into(),
            embed_endpoint: "http://127.0.0.1:8080/v1/embed".into(),
            embed_model: "multimodal-embedding".into(),
            timeout_s: 60.0,
            max_retries: 3,
            token_env: "TRAJSCENE_API_TOKEN".into(),
            max_in_flight: 4,
            requests_per_minute: 60,
        }
    }
}

impl RemoteSettings {
    pub fn token(&self) -> Result<String, RemoteError> {
        match std::env::var(&self.token_env) {
            Ok(t) if !t.is_empty() => Ok(t),
            _ => Err(RemoteError::MissingToken(self.token_env.clone())),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }

    pub fn rate_limiter(&self) -> RateLimiter {
        RateLimiter::new(self.max_in_flight, self.requests_per_minute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    /// No backoff sleeps; for tests and local mocks.
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32 << retry.min(16);
        (self.base_delay * factor).min(self.max_delay)
    }
}

/// A result together with how many calls it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempted<T> {
    pub value: T,
    pub attempts: u32,
}

/// Caps concurrent requests and spaces request starts evenly.
#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    min_interval: Duration,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

#[derive(Debug)]
struct LimiterState {
    in_flight: usize,
    next_start: Option<Instant>,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.limiter.state.lock().unwrap_or_else(|e| e.into_inner());
        s.in_flight -= 1;
        self.limiter.freed.notify_one();
    }
}

impl RateLimiter {
    pub fn new(max_in_flight: usize, requests_per_minute: u32) -> Self {
        let min_interval = if requests_per_minute == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / requests_per_minute as f64)
        };
        Self {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            state: Mutex::new(LimiterState { in_flight: 0, next_start: None }),
            freed: Condvar::new(),
        }
    }

    /// Blocks until a slot is free and the spacing interval has passed.
    pub fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while s.in_flight >= self.max_in_flight {
            s = self.freed.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        s.in_flight += 1;
        let now = Instant::now();
        let start = s.next_start.map_or(now, |t| t.max(now));
        s.next_start = Some(start + self.min_interval);
        drop(s);
        let wait = start.saturating_duration_since(now);
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).in_flight
    }
}

/// Runs `call` until it succeeds, fails permanently, or exhausts
/// `policy.max_retries` retries. Authentication failures are never retried.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    limiter: Option<&RateLimiter>,
    mut call: impl FnMut() -> Result<T, CallError>,
) -> Result<Attempted<T>, RemoteError> {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let result = {
            let _permit = limiter.map(RateLimiter::acquire);
            call()
        };
        let err = match result {
            Ok(value) => return Ok(Attempted { value, attempts }),
            Err(e) => e,
        };
        if !err.is_retryable() || attempts > policy.max_retries {
            return Err(match err {
                CallError::Auth(status) => RemoteError::Auth { status, attempts },
                CallError::Timeout => RemoteError::Timeout { attempts },
                other => RemoteError::Failed { message: other.to_string(), attempts },
            });
        }
        tracing::debug!(attempts, error = %err, "retrying remote call");
        let d = policy.delay(attempts - 1);
        if !d.is_zero() {
            std::thread::sleep(d);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerRequest {
    pub model: String,
    pub system_text: String,
    pub user_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerResponse {
    pub completion: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedModality {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub modality: EmbedModality,
    pub payload: String,
}

impl EmbedRequest {
    pub fn image(model: &str, bytes: &[u8]) -> Self {
        Self {
            model: model.to_string(),
            modality: EmbedModality::Image,
            payload: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn text(model: &str, text: &str) -> Self {
        Self { model: model.to_string(), modality: EmbedModality::Text, payload: text.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
    pub dimension: usize,
}

pub trait ReasonerClient: Sync {
    fn complete(&self, request: &ReasonerRequest) -> Result<String, CallError>;
}

pub trait EmbedClient: Sync {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, CallError>;
}

struct HttpJson {
    agent: ureq::Agent,
    endpoint: String,
    token: String,
}

impl HttpJson {
    fn new(endpoint: &str, settings: &RemoteSettings) -> Result<Self, RemoteError> {
        let token = settings.token()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(settings.timeout_s.max(0.001)))
            .build();
        Ok(Self { agent, endpoint: endpoint.to_string(), token })
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(&self, body: &Req) -> Result<Resp, CallError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.token))
            .send_json(body);
        match resp {
            Ok(r) => r.into_json::<Resp>().map_err(|e| {
                if e.kind() == std::io::ErrorKind::TimedOut || e.kind() == std::io::ErrorKind::WouldBlock {
                    CallError::Timeout
                } else {
                    CallError::Protocol(e.to_string())
                }
            }),
            Err(ureq::Error::Status(status, r)) => {
                if status == 401 || status == 403 {
                    Err(CallError::Auth(status))
                } else {
                    Err(CallError::Http { status, body: r.into_string().unwrap_or_default() })
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(CallError::Timeout)
                } else {
                    Err(CallError::Transport(msg))
                }
            }
        }
    }
}

pub struct HttpReasonerClient {
    http: HttpJson,
}

impl HttpReasonerClient {
    /// Fails fast when the token variable is unset.
    pub fn from_settings(settings: &RemoteSettings) -> Result<Self, RemoteError> {
        Ok(Self { http: HttpJson::new(&settings.reasoner_endpoint, settings)? })
    }
}

impl ReasonerClient for HttpReasonerClient {
    fn complete(&self, request: &ReasonerRequest) -> Result<String, CallError> {
        self.http.post::<_, ReasonerResponse>(request).map(|r| r.completion)
    }
}

pub struct HttpEmbedClient {
    http: HttpJson,
}

impl HttpEmbedClient {
    pub fn from_settings(settings: &RemoteSettings) -> Result<Self, RemoteError> {
        Ok(Self { http: HttpJson::new(&settings.embed_endpoint, settings)? })
    }
}

impl EmbedClient for HttpEmbedClient {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, CallError> {
        let r: EmbedResponse = self.http.post(request)?;
        if r.vector.len() != r.dimension {
            return Err(CallError::Protocol(format!(
                "vector has {} entries but dimension says {}",
                r.vector.len(),
                r.dimension
            )));
        }
        Ok(r)
    }
}
