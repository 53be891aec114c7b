//! HTTP count provider for any engine that reports a total-results estimate.
//!
//! The request URL comes from a template with `{query}` and optional `{key}`
//! placeholders. The query text quotes each term and joins them with a
//! space, e.g. `"horse" "rider"`. The count is read from the JSON response
//! at a dot-separated field path such as `searchInformation.totalResults`;
//! numeric strings are accepted.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CountProvider, ProviderError, Query};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Enforces a minimum gap between consecutive requests.
pub struct RateLimiter {
    delay: Duration,
    clock: Arc<dyn Clock>,
    last: Mutex<Option<Duration>>,
}

impl RateLimiter {
    pub fn new(delay: Duration, clock: Arc<dyn Clock>) -> Self {
        Self { delay, clock, last: Mutex::new(None) }
    }

    /// Blocks until the next request may start, then records it. Holding
    /// the lock across the sleep serializes callers.
    pub fn wait(&self) {
        let mut last = self.last.lock().expect("rate limiter lock poisoned");
        if let Some(prev) = *last {
            let ready = prev + self.delay;
            let now = self.clock.now();
            if now < ready {
                self.clock.sleep(ready - now);
            }
        }
        *last = Some(self.clock.now());
    }
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, String>;
}

#[cfg(feature = "live")]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

#[cfg(feature = "live")]
impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("compsim/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { client })
    }
}

#[cfg(feature = "live")]
impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<String, String> {
        let resp = self.client.get(url).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// e.g. `https://www.googleapis.com/customsearch/v1?key={key}&cx=XXX&q={query}`
    pub endpoint: String,
    /// Dot-separated JSON path to the total count.
    pub count_field: String,
    /// Environment variable holding the API credential substituted for `{key}`.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// Index size reported by the engine, used as N when configured.
    #[serde(default)]
    pub index_size: Option<u64>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "COMPSIM_API_KEY".into()
}

fn default_timeout() -> u64 {
    30
}

pub struct LiveProvider {
    config: LiveConfig,
    api_key: Option<String>,
    limiter: RateLimiter,
    transport: Box<dyn Transport>,
}

impl LiveProvider {
    pub fn new(
        config: LiveConfig,
        api_key: Option<String>,
        limiter: RateLimiter,
        transport: Box<dyn Transport>,
    ) -> Result<Self, ProviderError> {
        if !config.endpoint.contains("{query}") {
            return Err(ProviderError::Config("endpoint template lacks `{query}`".into()));
        }
        if config.endpoint.contains("{key}") && api_key.is_none() {
            return Err(ProviderError::Config(format!(
                "endpoint needs an API key; set {}",
                config.api_key_env
            )));
        }
        Ok(Self { config, api_key, limiter, transport })
    }

    #[cfg(feature = "live")]
    pub fn from_config(config: LiveConfig, delay_ms: u64) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env).ok();
        let transport = HttpTransport::new(Duration::from_secs(config.timeout_secs))
            .map_err(ProviderError::Config)?;
        let limiter = RateLimiter::new(Duration::from_millis(delay_ms), Arc::new(SystemClock::default()));
        Self::new(config, key, limiter, Box::new(transport))
    }

    #[cfg(not(feature = "live"))]
    pub fn from_config(_config: LiveConfig, _delay_ms: u64) -> Result<Self, ProviderError> {
        Err(ProviderError::Config("built without the `live` feature".into()))
    }

    pub fn url_for(&self, query: &Query) -> String {
        let text = query.terms().iter().map(|t| format!("\"{t}\"")).collect::<Vec<_>>().join(" ");
        let encoded: String = url::form_urlencoded::byte_serialize(text.as_bytes()).collect();
        let mut url = self.config.endpoint.replace("{query}", &encoded);
        if let Some(key) = &self.api_key {
            let key: String = url::form_urlencoded::byte_serialize(key.as_bytes()).collect();
            url = url.replace("{key}", &key);
        }
        url
    }
}

/// Follows a dot-separated path and reads a nonnegative integer.
pub(crate) fn extract_count(body: &str, path: &str) -> Result<u64, String> {
    let root: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let mut v = &root;
    for part in path.split('.').filter(|p| !p.is_empty()) {
        v = match v {
            serde_json::Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get(i)),
            other => other.get(part),
        }
        .ok_or_else(|| format!("field `{part}` of `{path}` not found"))?;
    }
    match v {
        serde_json::Value::Number(n) => n.as_u64().ok_or_else(|| format!("`{n}` is not a nonnegative integer")),
        serde_json::Value::String(s) => {
            s.trim().parse().map_err(|_| format!("`{s}` is not a nonnegative integer"))
        }
        other => Err(format!("expected a number at `{path}`, found {other}")),
    }
}

impl CountProvider for LiveProvider {
    fn id(&self) -> String {
        url::Url::parse(&self.config.endpoint.replace(['{', '}'], ""))
            .ok()
            .and_then(|u| u.host_str().map(|h| format!("live:{h}")))
            .unwrap_or_else(|| "live".into())
    }

    fn fetch(&self, query: &Query) -> Result<u64, ProviderError> {
        let url = self.url_for(query);
        self.limiter.wait();
        let body = self
            .transport
            .get(&url)
            .map_err(|msg| ProviderError::Network { query: query.clone(), msg })?;
        extract_count(&body, &self.config.count_field)
            .map_err(|msg| ProviderError::Response { query: query.clone(), msg })
    }

    fn index_size(&self) -> Option<u64> {
        self.config.index_size
    }
}
