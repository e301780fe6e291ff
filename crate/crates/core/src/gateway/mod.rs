//! Uniform completion interface over model backends.
//!
//! [`Gateway::complete`] routes a request to the backend registered for its
//! `model_id`, retries retriable failures with exponential backoff (no
//! jitter), and bounds in-flight calls with one semaphore per distinct
//! `max_concurrency` value.

mod live;
mod mock;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::{AnthropicBackend, OpenAiBackend, ANTHROPIC_API_KEY_ENV, OPENAI_API_KEY_ENV, OPENAI_BASE_URL_ENV};
pub use mock::{infer_stage, mock_extract, MockBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_id: String,
    pub max_output_tokens: u32,
    pub timeout: Duration,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model_id: model_id.into(),
            max_output_tokens: 16_000,
            timeout: Duration::from_secs(300),
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::InvalidRequest("timeout must be > 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be > 0".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub backoff_multiplier: f64,
    pub max_concurrency: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff: Duration::from_secs(10),
            backoff_multiplier: 2.0,
            max_concurrency: 4,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_attempts < 1 {
            return Err(GatewayError::InvalidPolicy("max_attempts must be >= 1".into()));
        }
        if self.backoff_multiplier.is_nan() || self.backoff_multiplier <= 1.0 {
            return Err(GatewayError::InvalidPolicy("backoff_multiplier must be > 1".into()));
        }
        if self.max_concurrency < 1 {
            return Err(GatewayError::InvalidPolicy("max_concurrency must be >= 1".into()));
        }
        Ok(())
    }

    /// Delay after failed attempt `attempt` (1-based): `base * multiplier^(attempt-1)`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.backoff_multiplier.powi(attempt.saturating_sub(1) as i32);
        self.base_backoff.mul_f64(factor)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("{0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        match self {
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => matches!(status, 408 | 429 | 500..=599),
            BackendError::Fatal(_) => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("no backend registered for model {0:?}")]
    NoBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid retry policy: {0}")]
    InvalidPolicy(String),
    #[error("exhausted {attempts} attempt(s); last error: {last}")]
    Exhausted {
        attempts: u32,
        last: BackendError,
        log: Vec<AttemptRecord>,
    },
    #[error("non-retriable backend error on attempt {attempts}: {cause}")]
    Backend {
        attempts: u32,
        cause: BackendError,
        log: Vec<AttemptRecord>,
    },
}

impl GatewayError {
    /// Attempt records accumulated before the failure.
    pub fn attempt_log(&self) -> &[AttemptRecord] {
        match self {
            GatewayError::Exhausted { log, .. } | GatewayError::Backend { log, .. } => log,
            _ => &[],
        }
    }
}

/// Something that turns a prompt into text. Implementations must tolerate
/// concurrent calls.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError>;
}

impl<F> Backend for F
where
    F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        self(req)
    }
}

/// One backend attempt, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub model_id: String,
    pub attempt: u32,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
    /// Delays slept between attempts, in order.
    pub backoffs: Vec<Duration>,
    pub log: Vec<AttemptRecord>,
}

/// Counting semaphore; std has none.
#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    backends: HashMap<String, Arc<dyn Backend>>,
    fallback: Option<Arc<dyn Backend>>,
    limits: Mutex<HashMap<usize, Arc<Semaphore>>>,
    sleeper: Sleeper,
    audit: Option<Mutex<File>>,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self {
            backends: HashMap::new(),
            fallback: None,
            limits: Mutex::new(HashMap::new()),
            sleeper: Arc::new(std::thread::sleep),
            audit: None,
        }
    }

    /// Gateway whose every model id resolves to the deterministic mock.
    pub fn mock() -> Self {
        Self::new().with_fallback(Arc::new(MockBackend))
    }

    pub fn register(mut self, model_id: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        self.backends.insert(model_id.into(), backend);
        self
    }

    /// Backend used for model ids without an explicit registration.
    pub fn with_fallback(mut self, backend: Arc<dyn Backend>) -> Self {
        self.fallback = Some(backend);
        self
    }

    /// Replaces the function used to wait between attempts.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    /// Appends one JSON line per attempt to `path`.
    pub fn with_audit_log(mut self, path: &Path) -> std::io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(Mutex::new(f));
        Ok(self)
    }

    fn backend_for(&self, model_id: &str) -> Result<Arc<dyn Backend>, GatewayError> {
        self.backends
            .get(model_id)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| GatewayError::NoBackend(model_id.to_string()))
    }

    fn limiter(&self, n: usize) -> Arc<Semaphore> {
        self.limits
            .lock()
            .unwrap()
            .entry(n)
            .or_insert_with(|| Arc::new(Semaphore::new(n)))
            .clone()
    }

    fn audit(&self, rec: &AttemptRecord) {
        if let Some(f) = &self.audit {
            if let Ok(line) = serde_json::to_string(rec) {
                let mut f = f.lock().unwrap();
                // audit failures must not fail the call
                let _ = writeln!(f, "{line}");
            }
        }
    }

    pub fn complete(&self, req: &CompletionRequest, policy: &RetryPolicy) -> Result<Completion, GatewayError> {
        req.validate()?;
        policy.validate()?;
        let backend = self.backend_for(&req.model_id)?;
        let limiter = self.limiter(policy.max_concurrency);

        let started = Instant::now();
        let mut log = Vec::new();
        let mut backoffs = Vec::new();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let t0 = Instant::now();
            let outcome = {
                let _permit = limiter.acquire();
                backend.complete(req)
            };
            let elapsed = t0.elapsed();
            let outcome = match outcome {
                Ok(_) if elapsed > req.timeout => Err(BackendError::Timeout(req.timeout)),
                other => other,
            };
            let rec = AttemptRecord {
                model_id: req.model_id.clone(),
                attempt,
                prompt: req.prompt.clone(),
                response: outcome.as_ref().ok().cloned(),
                error: outcome.as_ref().err().map(ToString::to_string),
                latency_ms: elapsed.as_millis() as u64,
            };
            self.audit(&rec);
            log.push(rec);

            match outcome {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        attempts: attempt,
                        latency: started.elapsed(),
                        backoffs,
                        log,
                    })
                }
                Err(cause) if !cause.is_retriable() => {
                    return Err(GatewayError::Backend {
                        attempts: attempt,
                        cause,
                        log,
                    })
                }
                Err(last) if attempt >= policy.max_attempts => {
                    return Err(GatewayError::Exhausted {
                        attempts: attempt,
                        last,
                        log,
                    })
                }
                Err(_) => {
                    let d = policy.backoff(attempt);
                    backoffs.push(d);
                    (self.sleeper)(d);
                }
            }
        }
    }
}

/// Builds a gateway from a CLI backend spec: `mock` or `live:MODEL_ID`.
/// Returns the gateway and the model id requests should carry.
pub fn gateway_from_spec(spec: &str) -> Result<(Gateway, String), GatewayError> {
    if spec == "mock" {
        return Ok((Gateway::mock(), "mock".to_string()));
    }
    let model = spec
        .strip_prefix("live:")
        .filter(|m| !m.is_empty())
        .ok_or_else(|| GatewayError::InvalidRequest(format!("backend must be `mock` or `live:MODEL_ID`, got {spec:?}")))?;
    let backend: Arc<dyn Backend> = if live::is_anthropic_model(model) {
        Arc::new(AnthropicBackend::from_env().map_err(|e| GatewayError::InvalidRequest(e.to_string()))?)
    } else {
        Arc::new(OpenAiBackend::from_env().map_err(|e| GatewayError::InvalidRequest(e.to_string()))?)
    };
    Ok((Gateway::new().register(model, backend), model.to_string()))
}
