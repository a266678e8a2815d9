//! Provider-agnostic chat completion with a content-addressed response cache.
//!
//! Every request is keyed by a SHA-256 digest of (provider, model,
//! temperature, system prompt, user prompt). Cache and fixture directories
//! share one layout: a file per exchange named by the hex digest, holding the
//! full [`ChatExchange`] as JSON. Nothing else in the crate touches the
//! network; other modules receive a [`Gateway`] handle.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Provider ids the gateway understands. `replay` has no live backend and
/// can only be answered from a cache or fixture store.
pub const KNOWN_PROVIDERS: [&str; 3] = ["openai", "anthropic", "replay"];

pub const OPENAI_KEY_VAR: &str = "OPENAI_API_KEY";
pub const OPENAI_URL_VAR: &str = "OPENAI_BASE_URL";
pub const ANTHROPIC_KEY_VAR: &str = "ANTHROPIC_API_KEY";
pub const ANTHROPIC_URL_VAR: &str = "ANTHROPIC_BASE_URL";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("transport error from {provider} (status {}): {message}", status.map(|s| s.to_string()).unwrap_or_else(|| "none".into()))]
    Transport { provider: String, status: Option<u16>, message: String },
    #[error("offline mode forbids a live call (no cached response for prompt digest {digest})")]
    Policy { digest: String },
    #[error("missing fixture for prompt digest {digest}")]
    MissingFixture { digest: String },
    #[error("corrupt fixture record {file}: {message}")]
    FixtureParse { file: String, message: String },
    #[error("cache I/O at {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl GatewayError {
    fn retryable(&self) -> bool {
        match self {
            GatewayError::Transport { status, .. } => match status {
                None => true,
                Some(code) => *code == 408 || *code == 429 || *code >= 500,
            },
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelSpec {
    pub provider_id: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_tokens() -> u32 {
    1024
}

impl ModelSpec {
    pub fn new(provider_id: impl Into<String>, model_id: impl Into<String>) -> Self {
        ModelSpec {
            provider_id: provider_id.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.provider_id, self.model_id)
    }
}

/// Hex-encoded SHA-256 digest identifying an exchange.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(model: &ModelSpec, system_prompt: &str, user_prompt: &str) -> CacheKey {
        // Length-prefixed fields: no two distinct inputs share an encoding.
        let temperature = format!("{}", model.temperature + 0.0);
        let mut hasher = Sha256::new();
        for field in
            [model.provider_id.as_str(), model.model_id.as_str(), temperature.as_str(), system_prompt, user_prompt]
        {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        CacheKey(hex::encode(hasher.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn is_key_name(name: &str) -> bool {
        name.len() == 64 && name.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub model: ModelSpec,
}

impl ChatRequest {
    pub fn new(model: &ModelSpec, system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        ChatRequest { system_prompt: system_prompt.into(), user_prompt: user_prompt.into(), model: model.clone() }
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::compute(&self.model, &self.system_prompt, &self.user_prompt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatExchange {
    pub system_prompt: String,
    pub user_prompt: String,
    pub model: ModelSpec,
    pub response: String,
    pub cache_key: CacheKey,
}

impl ChatExchange {
    pub fn new(request: &ChatRequest, response: impl Into<String>) -> Self {
        ChatExchange {
            system_prompt: request.system_prompt.clone(),
            user_prompt: request.user_prompt.clone(),
            model: request.model.clone(),
            response: response.into(),
            cache_key: request.cache_key(),
        }
    }

    fn parse(file: &Path, text: &str) -> Result<Self, GatewayError> {
        let corrupt = |message: String| GatewayError::FixtureParse { file: file.display().to_string(), message };
        let exchange: ChatExchange = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let recomputed = CacheKey::compute(&exchange.model, &exchange.system_prompt, &exchange.user_prompt);
        if recomputed != exchange.cache_key {
            return Err(corrupt(format!("stored key {} does not match content ({recomputed})", exchange.cache_key)));
        }
        if let Some(name) = file.file_name().and_then(|n| n.to_str()) {
            if name != exchange.cache_key.as_str() {
                return Err(corrupt(format!("file name does not match key {}", exchange.cache_key)));
            }
        }
        Ok(exchange)
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Adapts a closure into a provider. Used for scripted responders.
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        (self.0)(request)
    }
}

fn exchange_files(dir: &Path) -> Result<Vec<PathBuf>, GatewayError> {
    let io = |source| GatewayError::Io { path: dir.display().to_string(), source };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(CacheKey::is_key_name) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Replays recorded exchanges and nothing else.
#[derive(Debug, Default)]
pub struct FixtureProvider {
    exchanges: HashMap<CacheKey, ChatExchange>,
}

impl FixtureProvider {
    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

impl ChatProvider for FixtureProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let key = request.cache_key();
        self.exchanges.get(&key).map(|e| e.response.clone()).ok_or(GatewayError::MissingFixture { digest: key.0 })
    }
}

pub fn register_fixtures(dir: impl AsRef<Path>) -> Result<FixtureProvider, GatewayError> {
    let dir = dir.as_ref();
    let mut exchanges = HashMap::new();
    for file in exchange_files(dir)? {
        let text = std::fs::read_to_string(&file)
            .map_err(|source| GatewayError::Io { path: file.display().to_string(), source })?;
        let exchange = ChatExchange::parse(&file, &text)?;
        exchanges.insert(exchange.cache_key.clone(), exchange);
    }
    Ok(FixtureProvider { exchanges })
}

/// Digest over every exchange file in a fixture or cache directory.
pub fn store_digest(dir: impl AsRef<Path>) -> Result<String, GatewayError> {
    let mut hasher = Sha256::new();
    for file in exchange_files(dir.as_ref())? {
        let bytes =
            std::fs::read(&file).map_err(|source| GatewayError::Io { path: file.display().to_string(), source })?;
        hasher.update(file.file_name().and_then(|n| n.to_str()).unwrap_or_default().as_bytes());
        hasher.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Directory-backed exchange store. Reads are concurrent; writes are
/// serialized and land via rename, so readers never see partial files.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    memory: RwLock<HashMap<CacheKey, String>>,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| GatewayError::Io { path: dir.display().to_string(), source })?;
        Ok(ResponseCache { dir, memory: RwLock::default(), write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<String>, GatewayError> {
        if let Some(hit) = self.memory.read().expect("cache lock poisoned").get(key) {
            return Ok(Some(hit.clone()));
        }
        let path = self.dir.join(key.as_str());
        let text = match std::fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(GatewayError::Io { path: path.display().to_string(), source }),
        };
        let exchange = ChatExchange::parse(&path, &text)?;
        self.memory.write().expect("cache lock poisoned").insert(key.clone(), exchange.response.clone());
        Ok(Some(exchange.response))
    }

    pub fn put(&self, exchange: &ChatExchange) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let path = self.dir.join(exchange.cache_key.as_str());
        let io = |source| GatewayError::Io { path: path.display().to_string(), source };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        let mut body = serde_json::to_string_pretty(exchange).expect("exchange serializes");
        body.push('\n');
        tmp.write_all(body.as_bytes()).map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        self.memory.write().expect("cache lock poisoned").insert(exchange.cache_key.clone(), exchange.response.clone());
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(500) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub cache_hits: u64,
    pub live_calls: u64,
}

pub struct Gateway {
    providers: BTreeMap<String, Arc<dyn ChatProvider>>,
    cache: Option<ResponseCache>,
    offline: bool,
    retry: RetryPolicy,
    parallelism: usize,
    cache_hits: AtomicU64,
    live_calls: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("providers", &self.providers.keys().collect::<Vec<_>>())
            .field("cache", &self.cache.as_ref().map(ResponseCache::dir))
            .field("offline", &self.offline)
            .field("parallelism", &self.parallelism)
            .finish()
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway {
            providers: BTreeMap::new(),
            cache: None,
            offline: false,
            retry: RetryPolicy::default(),
            parallelism: 4,
            cache_hits: AtomicU64::new(0),
            live_calls: AtomicU64::new(0),
        }
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays a fixture directory with live calls forbidden.
    pub fn offline(fixture_dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        Ok(Gateway::new().with_cache(ResponseCache::open(fixture_dir)?).with_offline(true))
    }

    /// Registers the live providers whose credentials are present.
    pub fn with_env_providers(mut self) -> Self {
        if let Ok(key) = std::env::var(OPENAI_KEY_VAR) {
            let base = std::env::var(OPENAI_URL_VAR).unwrap_or_else(|_| "https://api.openai.com/v1".into());
            self = self.with_provider("openai", Arc::new(OpenAiProvider::new(key, base)));
        }
        if let Ok(key) = std::env::var(ANTHROPIC_KEY_VAR) {
            let base = std::env::var(ANTHROPIC_URL_VAR).unwrap_or_else(|_| "https://api.anthropic.com/v1".into());
            self = self.with_provider("anthropic", Arc::new(AnthropicProvider::new(key, base)));
        }
        self
    }

    pub fn with_provider(mut self, id: impl Into<String>, provider: Arc<dyn ChatProvider>) -> Self {
        self.providers.insert(id.into(), provider);
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            live_calls: self.live_calls.load(Ordering::Relaxed),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let provider_id = request.model.provider_id.as_str();
        if !KNOWN_PROVIDERS.contains(&provider_id) && !self.providers.contains_key(provider_id) {
            return Err(GatewayError::Config(format!("unknown provider {provider_id:?}")));
        }
        if request.model.model_id.trim().is_empty() {
            return Err(GatewayError::Config("empty model id".into()));
        }
        if !(request.model.temperature >= 0.0 && request.model.temperature.is_finite()) {
            return Err(GatewayError::Config(format!("invalid temperature {}", request.model.temperature)));
        }
        let key = request.cache_key();
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        if self.offline {
            return Err(GatewayError::Policy { digest: key.0 });
        }
        let provider = self
            .providers
            .get(provider_id)
            .ok_or_else(|| GatewayError::Config(format!("provider {provider_id:?} has no live backend configured")))?;
        let response = self.call_with_retry(provider.as_ref(), request)?;
        if let Some(cache) = &self.cache {
            cache.put(&ChatExchange::new(request, response.clone()))?;
        }
        Ok(response)
    }

    fn call_with_retry(&self, provider: &dyn ChatProvider, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut attempt = 0;
        loop {
            self.live_calls.fetch_add(1, Ordering::Relaxed);
            match provider.complete(request) {
                Ok(response) => return Ok(response),
                Err(e) if e.retryable() && attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.saturating_pow(attempt);
                    log::warn!("{} failed ({e}); retrying in {delay:?}", request.model.label());
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn http_agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into()
}

fn post_json(
    agent: &ureq::Agent,
    provider: &str,
    url: &str,
    headers: &[(&str, &str)],
    body: serde_json::Value,
) -> Result<serde_json::Value, GatewayError> {
    let transport =
        |status, message: String| GatewayError::Transport { provider: provider.to_string(), status, message };
    let mut req = agent.post(url).header("content-type", "application/json");
    for (name, value) in headers {
        req = req.header(*name, *value);
    }
    let mut response = req.send(body.to_string()).map_err(|e| transport(None, e.to_string()))?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(|e| transport(Some(status), e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(transport(Some(status), text));
    }
    serde_json::from_str(&text).map_err(|e| transport(Some(status), format!("undecodable body: {e}")))
}

/// OpenAI-compatible `/chat/completions`.
pub struct OpenAiProvider {
    api_key: String,
    base_url: String,
    agent: ureq::Agent,
}

impl OpenAiProvider {
    pub fn new(api_key: impl Into<String>, base_url: impl Into<String>) -> Self {
        OpenAiProvider { api_key: api_key.into(), base_url: base_url.into(), agent: http_agent() }
    }
}

impl ChatProvider for OpenAiProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": request.model.model_id,
            "temperature": request.model.temperature,
            "max_tokens": request.model.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        });
        let auth = format!("Bearer {}", self.api_key);
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let reply = post_json(&self.agent, "openai", &url, &[("authorization", &auth)], body)?;
        reply["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| GatewayError::Transport {
            provider: "openai".into(),
            status: Some(200),
            message: "response has no choices[0].message.content".into(),
        })
    }
}

/// Anthropic `/messages`.
pub struct AnthropicProvider {
    api_key: String,
    base_url: String,
    agent: ureq::Agent,
}

impl AnthropicProvider {
    pub fn new(api_key: impl Into<String>, base_url: impl Into<String>) -> Self {
        AnthropicProvider { api_key: api_key.into(), base_url: base_url.into(), agent: http_agent() }
    }
}

impl ChatProvider for AnthropicProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": request.model.model_id,
            "temperature": request.model.temperature,
            "max_tokens": request.model.max_output_tokens,
            "system": request.system_prompt,
            "messages": [{"role": "user", "content": request.user_prompt}],
        });
        let url = format!("{}/messages", self.base_url.trim_end_matches('/'));
        let headers = [("x-api-key", self.api_key.as_str()), ("anthropic-version", "2023-06-01")];
        let reply = post_json(&self.agent, "anthropic", &url, &headers, body)?;
        let text: String = reply["content"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|block| block["type"] == "text")
            .filter_map(|block| block["text"].as_str())
            .collect();
        if text.is_empty() {
            return Err(GatewayError::Transport {
                provider: "anthropic".into(),
                status: Some(200),
                message: "response has no text content".into(),
            });
        }
        Ok(text)
    }
}
