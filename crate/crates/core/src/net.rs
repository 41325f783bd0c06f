//! Blocking HTTP plumbing shared by the EDGAR client and the HTTP model
//! providers: a request-spacing rate limiter and a retrying GET/POST wrapper.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Largest body accepted from any endpoint. Some 10-K bundles exceed 100 MB.
const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;
const MAX_BACKOFF: Duration = Duration::from_secs(60);

/// Spaces requests at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        assert!(rate > 0.0, "rate must be positive");
        Self { interval: Duration::from_secs_f64(1.0 / rate), next_slot: Mutex::new(Instant::now()) }
    }

    pub fn per_minute(rate: f64) -> Self {
        Self::per_second(rate / 60.0)
    }

    /// Blocks until the caller may issue its request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HttpError {
    /// Connection, TLS, timeout or body-decoding failure.
    Transport(String),
    /// Final non-success status after retries.
    Status { status: u16, body: String },
}

impl std::fmt::Display for HttpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpError::Transport(m) => write!(f, "transport error: {m}"),
            HttpError::Status { status, body } => {
                let snippet: String = body.chars().take(200).collect();
                write!(f, "HTTP {status}: {snippet}")
            }
        }
    }
}

impl std::error::Error for HttpError {}

/// Retrying blocking client. 429 and 5xx responses and transport errors are
/// retried with exponential backoff; a `Retry-After` header in seconds
/// overrides the computed delay.
#[derive(Debug)]
pub struct HttpClient {
    agent: ureq::Agent,
    headers: Vec<(String, String)>,
    limiter: Option<RateLimiter>,
    max_attempts: u32,
    base_backoff: Duration,
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            headers: Vec::new(),
            limiter: None,
            max_attempts: 5,
            base_backoff: Duration::from_millis(500),
        }
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_retries(mut self, max_attempts: u32, base_backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.base_backoff = base_backoff;
        self
    }

    /// GET returning the raw body, or `Status` for the final non-2xx.
    pub fn get_bytes(&self, url: &str) -> Result<Vec<u8>, HttpError> {
        self.execute(|| {
            let mut req = self.agent.get(url);
            for (k, v) in &self.headers {
                req = req.header(k.as_str(), v.as_str());
            }
            req.call()
        })
    }

    pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, HttpError> {
        let bytes = self.execute(|| {
            let mut req = self.agent.post(url);
            for (k, v) in &self.headers {
                req = req.header(k.as_str(), v.as_str());
            }
            req.send_json(body)
        })?;
        serde_json::from_slice(&bytes).map_err(|e| HttpError::Transport(format!("bad JSON: {e}")))
    }

    fn execute<F>(&self, send: F) -> Result<Vec<u8>, HttpError>
    where
        F: Fn() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let (err, retry_after) = match send() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let retry_after = resp
                        .headers()
                        .get("retry-after")
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    let body = resp
                        .body_mut()
                        .with_config()
                        .limit(MAX_BODY_BYTES)
                        .read_to_vec()
                        .map_err(|e| HttpError::Transport(e.to_string()));
                    if (200..300).contains(&status) {
                        return body;
                    }
                    let body = String::from_utf8_lossy(&body.unwrap_or_default()).into_owned();
                    let err = HttpError::Status { status, body };
                    if !(status == 429 || status >= 500) {
                        return Err(err);
                    }
                    (err, retry_after)
                }
                Err(e) => (HttpError::Transport(e.to_string()), None),
            };
            if attempt >= self.max_attempts {
                return Err(err);
            }
            let backoff = retry_after
                .unwrap_or_else(|| self.base_backoff * 2u32.saturating_pow(attempt - 1))
                .min(MAX_BACKOFF);
            log::debug!("retrying after {backoff:?}: {err}");
            thread::sleep(backoff);
        }
    }
}
