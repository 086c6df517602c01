//! Verified-source and metadata retrieval from an explorer-compatible HTTP API.
//!
//! Resolution order for every lookup: offline fixture directory (when
//! configured, nothing else is consulted over the network), then the cache,
//! then a live request. Live requests go through a shared rate limiter that
//! queues callers instead of dropping them, and transient failures are
//! retried with exponential backoff.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::Address;

pub const API_KEY_ENV: &str = "EVOCHAIN_EXPLORER_KEY";
pub const DEFAULT_MAX_RPS: f64 = 4.0;
pub const METADATA_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Error)]
pub enum ExplorerError {
    #[error("explorer unavailable after {} attempts: {}", attempts.len(), attempts.join("; "))]
    Transient { attempts: Vec<String> },
    #[error("unexpected explorer response: {0}")]
    Protocol(String),
    #[error("explorer configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {0}: {1}")]
    Status(u16, String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Status(code, _) => *code == 429 || *code >= 500,
        }
    }
}

/// Blocking HTTP GET returning the response body.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(20))
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<String, TransportError> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(k, v);
        }
        match req.call() {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| TransportError::Network(e.to_string())),
            Err(ureq::Error::Status(code, resp)) => Err(TransportError::Status(
                code,
                resp.status_text().to_string(),
            )),
            Err(e) => Err(TransportError::Network(e.to_string())),
        }
    }
}

/// Refuses every request. Installed whenever a fixture directory is configured.
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn get(&self, url: &str, _query: &[(&str, String)]) -> Result<String, TransportError> {
        panic!("network access attempted in offline mode: {url}")
    }
}

/// Time source for rate limiting, backoff and cache timestamps.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn unix_seconds(&self) -> u64;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn unix_seconds(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Deterministic clock: `sleep` advances time instantly.
#[derive(Debug)]
pub struct FakeClock {
    elapsed: Mutex<Duration>,
    unix_origin: u64,
}

impl FakeClock {
    pub fn new(unix_origin: u64) -> Self {
        FakeClock {
            elapsed: Mutex::new(Duration::ZERO),
            unix_origin,
        }
    }

    pub fn advance(&self, d: Duration) {
        *self.elapsed.lock() += d;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.elapsed.lock()
    }

    fn unix_seconds(&self) -> u64 {
        self.unix_origin + self.elapsed.lock().as_secs()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Spacing limiter: request k starts no earlier than `(k - 1) / rate` after the first.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(max_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / max_per_second),
            next_slot: Mutex::new(None),
            clock,
        }
    }

    /// Blocks until the caller's slot arrives.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock();
            let now = self.clock.now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
    }
}

#[derive(Clone, PartialEq, Eq, Default)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub base_url: String,
    /// Only ever read from the environment.
    pub api_key: Option<ApiKey>,
    pub max_requests_per_second: f64,
    pub cache_dir: Option<PathBuf>,
    pub offline_fixture_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_url: "https://api.etherscan.io/api".into(),
            api_key: None,
            max_requests_per_second: DEFAULT_MAX_RPS,
            cache_dir: None,
            offline_fixture_dir: None,
            retry: RetryPolicy::default(),
        }
    }
}

impl ClientConfig {
    pub fn offline(fixture_dir: impl Into<PathBuf>) -> Self {
        ClientConfig {
            offline_fixture_dir: Some(fixture_dir.into()),
            ..Default::default()
        }
    }

    /// Picks up the API key from `EVOCHAIN_EXPLORER_KEY` if set.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()).map(ApiKey);
        self
    }

    fn validate(&self) -> Result<(), ExplorerError> {
        if !(self.max_requests_per_second.is_finite() && self.max_requests_per_second > 0.0) {
            return Err(ExplorerError::Config(format!(
                "max_requests_per_second must be positive, got {}",
                self.max_requests_per_second
            )));
        }
        if self.retry.attempts == 0 {
            return Err(ExplorerError::Config("retry attempts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Live,
    Cache,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBundle {
    pub address: Address,
    pub verified: bool,
    /// Empty when unverified. Multi-file sources are concatenated with `// File:` separators.
    pub source_text: String,
    pub compiler_version: String,
    pub contract_name: String,
    pub fetched_at: u64,
    pub origin: Origin,
    pub file_count: u32,
}

impl SourceBundle {
    fn unverified(address: Address, fetched_at: u64, origin: Origin) -> Self {
        SourceBundle {
            address,
            verified: false,
            source_text: String::new(),
            compiler_version: String::new(),
            contract_name: String::new(),
            fetched_at,
            origin,
            file_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractMetadata {
    pub address: Address,
    pub first_tx_timestamp: Option<u64>,
    pub tx_count: Option<u64>,
    pub fetched_at: u64,
    pub origin: Origin,
}

/// On-disk fixture layout: `<dir>/<address>.json`, every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureRecord {
    pub verified: Option<bool>,
    pub source_text: String,
    pub compiler_version: String,
    pub contract_name: String,
    pub file_count: Option<u32>,
    pub first_tx_timestamp: Option<u64>,
    pub tx_count: Option<u64>,
}

impl FixtureRecord {
    pub fn path(dir: &Path, address: &Address) -> PathBuf {
        dir.join(format!("{address}.json"))
    }
}

pub struct ExplorerClient {
    config: ClientConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    sources: Mutex<HashMap<Address, SourceBundle>>,
    metadata: Mutex<HashMap<Address, ContractMetadata>>,
    in_flight: Mutex<HashMap<Address, Arc<Mutex<()>>>>,
    live_requests: AtomicU64,
}

impl ExplorerClient {
    /// Live HTTP transport unless a fixture directory is configured.
    pub fn new(config: ClientConfig) -> Result<Self, ExplorerError> {
        let transport: Arc<dyn Transport> = if config.offline_fixture_dir.is_some() {
            Arc::new(OfflineTransport)
        } else {
            Arc::new(HttpTransport::default())
        };
        Self::with_parts(config, transport, Arc::new(SystemClock::default()))
    }

    pub fn with_parts(
        config: ClientConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ExplorerError> {
        config.validate()?;
        Ok(ExplorerClient {
            limiter: RateLimiter::new(config.max_requests_per_second, clock.clone()),
            config,
            transport,
            clock,
            sources: Mutex::new(HashMap::new()),
            metadata: Mutex::new(HashMap::new()),
            in_flight: Mutex::new(HashMap::new()),
            live_requests: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn is_offline(&self) -> bool {
        self.config.offline_fixture_dir.is_some()
    }

    /// Number of live HTTP attempts issued so far.
    pub fn live_requests(&self) -> u64 {
        self.live_requests.load(Ordering::SeqCst)
    }

    fn address_lock(&self, address: &Address) -> Arc<Mutex<()>> {
        self.in_flight.lock().entry(*address).or_default().clone()
    }

    fn read_fixture(&self, address: &Address) -> Result<Option<FixtureRecord>, ExplorerError> {
        let Some(dir) = &self.config.offline_fixture_dir else {
            return Ok(None);
        };
        let path = FixtureRecord::path(dir, address);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| ExplorerError::Protocol(format!("fixture {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ExplorerError::Config(format!("fixture {}: {e}", path.display()))),
        }
    }

    fn cache_path(&self, family: &str, address: &Address) -> Option<PathBuf> {
        self.config
            .cache_dir
            .as_ref()
            .map(|d| d.join(family).join(format!("{address}.json")))
    }

    fn read_disk_cache<T: for<'de> Deserialize<'de>>(&self, family: &str, address: &Address) -> Option<T> {
        let path = self.cache_path(family, address)?;
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write_disk_cache<T: Serialize>(&self, family: &str, address: &Address, value: &T) {
        let Some(path) = self.cache_path(family, address) else {
            return;
        };
        let write = || -> std::io::Result<()> {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, serde_json::to_vec(value).expect("cache entries serialize"))
        };
        if let Err(e) = write() {
            tracing::warn!(path = %path.display(), error = %e, "cache write failed");
        }
    }

    pub fn fetch_verified_source(&self, address: &Address) -> Result<SourceBundle, ExplorerError> {
        if self.is_offline() {
            if let Some(fx) = self.read_fixture(address)? {
                return Ok(bundle_from_fixture(*address, fx, self.clock.unix_seconds()));
            }
        }
        let lock = self.address_lock(address);
        let _guard = lock.lock();

        if let Some(hit) = self.sources.lock().get(address) {
            return Ok(SourceBundle {
                origin: Origin::Cache,
                ..hit.clone()
            });
        }
        if let Some(hit) = self.read_disk_cache::<SourceBundle>("source", address) {
            self.sources.lock().insert(*address, hit.clone());
            return Ok(SourceBundle {
                origin: Origin::Cache,
                ..hit
            });
        }
        if self.is_offline() {
            return Ok(SourceBundle::unverified(
                *address,
                self.clock.unix_seconds(),
                Origin::Fixture,
            ));
        }

        let body = self.live_get(&[
            ("module", "contract".into()),
            ("action", "getsourcecode".into()),
            ("address", address.to_string()),
        ])?;
        let bundle = parse_source_response(*address, &body, self.clock.unix_seconds())?;
        // unverified answers can change later; only verified source is immutable
        if bundle.verified {
            self.sources.lock().insert(*address, bundle.clone());
            self.write_disk_cache("source", address, &bundle);
        }
        Ok(bundle)
    }

    pub fn fetch_metadata(&self, address: &Address) -> Result<ContractMetadata, ExplorerError> {
        let now = self.clock.unix_seconds();
        if self.is_offline() {
            if let Some(fx) = self.read_fixture(address)? {
                return Ok(ContractMetadata {
                    address: *address,
                    first_tx_timestamp: fx.first_tx_timestamp,
                    tx_count: fx.tx_count,
                    fetched_at: now,
                    origin: Origin::Fixture,
                });
            }
        }
        let lock = self.address_lock(address);
        let _guard = lock.lock();

        let fresh = |m: &ContractMetadata| now.saturating_sub(m.fetched_at) < METADATA_TTL.as_secs();
        let cached = self
            .metadata
            .lock()
            .get(address)
            .cloned()
            .or_else(|| self.read_disk_cache::<ContractMetadata>("metadata", address));
        if let Some(hit) = cached.filter(|m| fresh(m)) {
            self.metadata.lock().insert(*address, hit.clone());
            return Ok(ContractMetadata {
                origin: Origin::Cache,
                ..hit
            });
        }
        if self.is_offline() {
            return Ok(ContractMetadata {
                address: *address,
                first_tx_timestamp: None,
                tx_count: None,
                fetched_at: now,
                origin: Origin::Fixture,
            });
        }

        let body = self.live_get(&[
            ("module", "account".into()),
            ("action", "txlist".into()),
            ("address", address.to_string()),
            ("startblock", "0".into()),
            ("endblock", "99999999".into()),
            ("page", "1".into()),
            ("offset", "1".into()),
            ("sort", "asc".into()),
        ])?;
        let meta = parse_metadata_response(*address, &body, now)?;
        self.metadata.lock().insert(*address, meta.clone());
        self.write_disk_cache("metadata", address, &meta);
        Ok(meta)
    }

    /// Rate-limited GET with bounded retries; rate-limit answers in the body count as transient.
    fn live_get(&self, params: &[(&str, String)]) -> Result<String, ExplorerError> {
        let mut query: Vec<(&str, String)> = params.to_vec();
        if let Some(key) = &self.config.api_key {
            query.push(("apikey", key.expose().to_string()));
        }
        let mut attempts = Vec::new();
        let mut backoff = self.config.retry.initial_backoff;
        for attempt in 1..=self.config.retry.attempts {
            self.limiter.acquire();
            self.live_requests.fetch_add(1, Ordering::SeqCst);
            let outcome = match self.transport.get(&self.config.base_url, &query) {
                Ok(body) if is_rate_limited(&body) => Err(TransportError::Status(429, "rate limited".into())),
                other => other,
            };
            match outcome {
                Ok(body) => return Ok(body),
                Err(e) if e.retryable() => {
                    attempts.push(format!("attempt {attempt}: {e}"));
                    if attempt < self.config.retry.attempts {
                        self.clock.sleep(backoff);
                        backoff *= 2;
                    }
                }
                Err(e) => return Err(ExplorerError::Protocol(e.to_string())),
            }
        }
        Err(ExplorerError::Transient { attempts })
    }
}

fn bundle_from_fixture(address: Address, fx: FixtureRecord, now: u64) -> SourceBundle {
    let verified = fx.verified.unwrap_or(!fx.source_text.is_empty());
    if !verified {
        return SourceBundle::unverified(address, now, Origin::Fixture);
    }
    SourceBundle {
        address,
        verified,
        file_count: fx.file_count.unwrap_or(1),
        source_text: fx.source_text,
        compiler_version: fx.compiler_version,
        contract_name: fx.contract_name,
        fetched_at: now,
        origin: Origin::Fixture,
    }
}

fn is_rate_limited(body: &str) -> bool {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return false;
    };
    v.get("status").and_then(Value::as_str) == Some("0")
        && v
            .get("result")
            .and_then(Value::as_str)
            .is_some_and(|r| r.to_ascii_lowercase().contains("rate limit"))
}

/// Parses a `getsourcecode` answer.
pub fn parse_source_response(address: Address, body: &str, now: u64) -> Result<SourceBundle, ExplorerError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ExplorerError::Protocol(e.to_string()))?;
    let status = v.get("status").and_then(Value::as_str);
    let result = v.get("result");
    if status != Some("1") {
        let detail = result.and_then(Value::as_str).unwrap_or("no result");
        return Err(ExplorerError::Protocol(format!("status {status:?}: {detail}")));
    }
    let entry = result
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .ok_or_else(|| ExplorerError::Protocol("result is not a non-empty array".into()))?;
    let text = |k: &str| entry.get(k).and_then(Value::as_str).unwrap_or("").to_string();
    let raw = text("SourceCode");
    if raw.trim().is_empty() {
        return Ok(SourceBundle::unverified(address, now, Origin::Live));
    }
    let (source_text, file_count) = flatten_sources(&raw);
    Ok(SourceBundle {
        address,
        verified: true,
        source_text,
        compiler_version: text("CompilerVersion"),
        contract_name: text("ContractName"),
        fetched_at: now,
        origin: Origin::Live,
        file_count,
    })
}

/// Multi-file sources arrive as standard-JSON input (often wrapped in an
/// extra pair of braces) or a bare `{path: {content}}` map; files are joined
/// in path order with `// File: <path>` separators.
fn flatten_sources(raw: &str) -> (String, u32) {
    let trimmed = raw.trim();
    let candidate = if trimmed.starts_with("{{") && trimmed.ends_with("}}") {
        &trimmed[1..trimmed.len() - 1]
    } else {
        trimmed
    };
    if !candidate.starts_with('{') {
        return (raw.to_string(), 1);
    }
    let Ok(parsed) = serde_json::from_str::<Value>(candidate) else {
        return (raw.to_string(), 1);
    };
    let files = parsed.get("sources").unwrap_or(&parsed);
    let Some(map) = files.as_object() else {
        return (raw.to_string(), 1);
    };
    let mut entries: Vec<(&String, &str)> = map
        .iter()
        .filter_map(|(path, f)| f.get("content").and_then(Value::as_str).map(|c| (path, c)))
        .collect();
    if entries.is_empty() {
        return (raw.to_string(), 1);
    }
    entries.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = String::new();
    for (path, content) in &entries {
        out.push_str(&format!("// File: {path}\n"));
        out.push_str(content);
        if !content.ends_with('\n') {
            out.push('\n');
        }
    }
    (out, entries.len() as u32)
}

/// Parses an ascending `txlist` page of size one. The endpoint does not
/// report a total count, so `tx_count` stays absent for live answers.
pub fn parse_metadata_response(address: Address, body: &str, now: u64) -> Result<ContractMetadata, ExplorerError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ExplorerError::Protocol(e.to_string()))?;
    let mut meta = ContractMetadata {
        address,
        first_tx_timestamp: None,
        tx_count: None,
        fetched_at: now,
        origin: Origin::Live,
    };
    match (v.get("status").and_then(Value::as_str), v.get("result")) {
        (Some("1"), Some(Value::Array(items))) => {
            meta.first_tx_timestamp = items
                .first()
                .and_then(|t| t.get("timeStamp"))
                .and_then(|ts| match ts {
                    Value::String(s) => s.parse().ok(),
                    Value::Number(n) => n.as_u64(),
                    _ => None,
                });
            Ok(meta)
        }
        (Some("0"), Some(Value::Array(items))) if items.is_empty() => Ok(meta),
        (Some("0"), _) if v.get("message").and_then(Value::as_str) == Some("No transactions found") => Ok(meta),
        (status, _) => Err(ExplorerError::Protocol(format!("txlist status {status:?}"))),
    }
}
