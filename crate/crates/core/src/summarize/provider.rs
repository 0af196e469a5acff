//! HTTP clients for the chat-completion and embedding services.
//!
//! Both speak the common JSON protocol: `POST {base}/chat/completions` with
//! `{"model", "messages"}` answering `choices[0].message.content`, and
//! `POST {base}/embeddings` with `{"model", "input"}` answering
//! `data[0].embedding`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

pub const ENV_LLM_URL: &str = "AGENTLENS_LLM_URL";
pub const ENV_LLM_KEY: &str = "AGENTLENS_LLM_KEY";
pub const ENV_LLM_MODEL: &str = "AGENTLENS_LLM_MODEL";
pub const ENV_EMBED_URL: &str = "AGENTLENS_EMBED_URL";
pub const ENV_EMBED_KEY: &str = "AGENTLENS_EMBED_KEY";
pub const ENV_EMBED_MODEL: &str = "AGENTLENS_EMBED_MODEL";
pub const ENV_OFFLINE: &str = "AGENTLENS_OFFLINE";

pub const DEFAULT_LLM_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-ada-002";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("request to {url} timed out")]
    Timeout { url: String },
    #[error("{url} answered HTTP {status}: {body}")]
    Http {
        url: String,
        status: u16,
        body: String,
    },
    #[error("transport error talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("unexpected response from {url}: {message}")]
    BadResponse { url: String, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<ProviderError>,
    },
    #[error("no {service} endpoint configured; set {var} or run offline")]
    NotConfigured {
        service: &'static str,
        var: &'static str,
    },
}

impl ProviderError {
    /// Timeouts, transport failures, 429 and 5xx are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Timeout { .. } | ProviderError::Transport { .. } => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            ProviderError::RetriesExhausted { .. } => true,
            ProviderError::BadResponse { .. } | ProviderError::NotConfigured { .. } => false,
        }
    }
}

/// Endpoint configuration for one service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
}

/// Retry, timeout and rate-limit settings shared by the HTTP clients.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    /// Sustained requests per second.
    pub rate_per_sec: f64,
    pub burst: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
            rate_per_sec: 8.0,
            burst: 8,
        }
    }
}

/// Which backends to use, as read from the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderConfig {
    pub offline: bool,
    pub llm: Option<Endpoint>,
    pub embed: Option<Endpoint>,
}

impl ProviderConfig {
    pub fn offline() -> Self {
        Self {
            offline: true,
            llm: None,
            embed: None,
        }
    }

    /// Reads the `AGENTLENS_*` variables. `force_offline` wins over them.
    pub fn from_env(force_offline: bool) -> Self {
        Self::from_lookup(force_offline, |k| std::env::var(k).ok())
    }

    pub fn from_lookup(force_offline: bool, get: impl Fn(&str) -> Option<String>) -> Self {
        let offline = force_offline
            || get(ENV_OFFLINE).is_some_and(|v| matches!(v.trim(), "1" | "true" | "yes"));
        if offline {
            return Self::offline();
        }
        let endpoint = |url: &str, key: &str, model: &str, default_model: &str| {
            get(url).filter(|u| !u.trim().is_empty()).map(|u| Endpoint {
                base_url: u.trim().trim_end_matches('/').to_owned(),
                api_key: get(key).filter(|k| !k.is_empty()),
                model: get(model).unwrap_or_else(|| default_model.to_owned()),
            })
        };
        Self {
            offline: false,
            llm: endpoint(ENV_LLM_URL, ENV_LLM_KEY, ENV_LLM_MODEL, DEFAULT_LLM_MODEL),
            embed: endpoint(ENV_EMBED_URL, ENV_EMBED_KEY, ENV_EMBED_MODEL, DEFAULT_EMBED_MODEL),
        }
    }
}

/// Blocking token bucket shared across worker threads.
#[derive(Debug)]
pub struct TokenBucket {
    state: Mutex<(f64, Instant)>,
    rate_per_sec: f64,
    capacity: f64,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        Self {
            state: Mutex::new((capacity, Instant::now())),
            rate_per_sec: rate_per_sec.max(1e-6),
            capacity,
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("token bucket poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate_per_sec)
                    .min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Runs `attempt` up to `1 + max_retries` times with exponential backoff
/// on retryable errors.
pub fn with_retries<T>(
    config: &ClientConfig,
    mut attempt: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut tries = 0;
    loop {
        tries += 1;
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) if !e.is_retryable() => return Err(e),
            Err(e) if tries > config.max_retries => {
                return Err(ProviderError::RetriesExhausted {
                    attempts: tries,
                    last: Box::new(e),
                })
            }
            Err(e) => {
                let delay = config.backoff_base * 2u32.saturating_pow(tries - 1);
                tracing::warn!(error = %e, attempt = tries, ?delay, "provider call failed, retrying");
                std::thread::sleep(delay);
            }
        }
    }
}

/// Trips on the first exhausted retry budget in a batch so that the rest
/// of the batch fails without waiting out its own backoff.
#[derive(Debug, Default)]
pub struct Breaker(Mutex<Option<ProviderError>>);

impl Breaker {
    pub fn run<T, E>(
        &self,
        f: impl FnOnce() -> Result<T, E>,
        provider: impl Fn(&E) -> Option<ProviderError>,
        wrap: impl Fn(ProviderError) -> E,
    ) -> Result<T, E> {
        if let Some(e) = self.0.lock().expect("breaker poisoned").clone() {
            return Err(wrap(e));
        }
        let r = f();
        if let Err(e) = &r {
            if let Some(p @ ProviderError::RetriesExhausted { .. }) = provider(e) {
                self.0.lock().expect("breaker poisoned").get_or_insert(p);
            }
        }
        r
    }
}

/// Text completion service.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
    /// Identifies the model in cache keys.
    fn tag(&self) -> String;
}

/// Text embedding service returning raw (unnormalized) components.
pub trait EmbeddingModel: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
    fn tag(&self) -> String;
}

/// JSON-over-HTTP client for one endpoint.
pub struct HttpClient {
    endpoint: Endpoint,
    config: ClientConfig,
    agent: ureq::Agent,
    bucket: TokenBucket,
    requests: AtomicU64,
}

impl HttpClient {
    pub fn new(endpoint: Endpoint, config: ClientConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let bucket = TokenBucket::new(config.rate_per_sec, config.burst);
        Self {
            endpoint,
            config,
            agent,
            bucket,
            requests: AtomicU64::new(0),
        }
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/{}", self.endpoint.base_url, path);
        with_retries(&self.config, || {
            self.bucket.acquire();
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.endpoint.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req.send(body.to_string()).map_err(|e| map_transport(&url, e))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| map_transport(&url, e))?;
            if !(200..300).contains(&status) {
                return Err(ProviderError::Http {
                    url: url.clone(),
                    status,
                    body: text.chars().take(200).collect(),
                });
            }
            serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse {
                url: url.clone(),
                message: format!("invalid JSON: {e}"),
            })
        })
    }
}

fn map_transport(url: &str, e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout { url: url.to_owned() },
        other => ProviderError::Transport {
            url: url.to_owned(),
            message: other.to_string(),
        },
    }
}

impl LanguageModel for HttpClient {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let v = self.post("chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::BadResponse {
                url: format!("{}/chat/completions", self.endpoint.base_url),
                message: "missing choices[0].message.content".into(),
            })
    }

    fn tag(&self) -> String {
        format!("llm:{}", self.endpoint.model)
    }
}

impl EmbeddingModel for HttpClient {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = json!({"model": self.endpoint.model, "input": text});
        let v = self.post("embeddings", &body)?;
        let bad = |message: &str| ProviderError::BadResponse {
            url: format!("{}/embeddings", self.endpoint.base_url),
            message: message.to_owned(),
        };
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing data[0].embedding"))?;
        arr.iter()
            .map(|x| x.as_f64().ok_or_else(|| bad("non-numeric embedding component")))
            .collect()
    }

    fn tag(&self) -> String {
        format!("embed:{}", self.endpoint.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn env_lookup() {
        let vars = |k: &str| match k {
            ENV_LLM_URL => Some("http://llm.local/v1/".to_owned()),
            ENV_LLM_KEY => Some("secret".to_owned()),
            _ => None,
        };
        let cfg = ProviderConfig::from_lookup(false, vars);
        assert!(!cfg.offline);
        let llm = cfg.llm.unwrap();
        assert_eq!(llm.base_url, "http://llm.local/v1");
        assert_eq!(llm.api_key.as_deref(), Some("secret"));
        assert_eq!(llm.model, DEFAULT_LLM_MODEL);
        assert!(cfg.embed.is_none());

        let off = ProviderConfig::from_lookup(false, |k| {
            (k == ENV_OFFLINE).then(|| "1".to_owned()).or_else(|| vars(k))
        });
        assert_eq!(off, ProviderConfig::offline());
        assert!(ProviderConfig::from_lookup(true, vars).offline);
    }

    #[test]
    fn retries_are_bounded() {
        let config = ClientConfig {
            backoff_base: Duration::from_millis(1),
            ..Default::default()
        };
        let calls = Cell::new(0);
        let err = with_retries::<()>(&config, || {
            calls.set(calls.get() + 1);
            Err(ProviderError::Http {
                url: "u".into(),
                status: 503,
                body: String::new(),
            })
        })
        .unwrap_err();
        assert_eq!(calls.get(), 4);
        assert!(matches!(err, ProviderError::RetriesExhausted { attempts: 4, .. }));
        assert!(err.is_retryable());

        calls.set(0);
        let err = with_retries::<()>(&config, || {
            calls.set(calls.get() + 1);
            Err(ProviderError::Http {
                url: "u".into(),
                status: 401,
                body: String::new(),
            })
        })
        .unwrap_err();
        assert_eq!(calls.get(), 1);
        assert!(!err.is_retryable());

        calls.set(0);
        let ok = with_retries(&config, || {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(ProviderError::Timeout { url: "u".into() })
            } else {
                Ok(7)
            }
        });
        assert_eq!(ok, Ok(7));
    }

    #[test]
    fn token_bucket_limits_rate() {
        let bucket = TokenBucket::new(200.0, 2);
        let start = Instant::now();
        for _ in 0..6 {
            bucket.acquire();
        }
        // Two burst tokens, then four more at 5 ms each.
        assert!(start.elapsed() >= Duration::from_millis(15));
    }
}
