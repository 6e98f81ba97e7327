//! Chat-completion client with greedy decoding, content-addressed caching,
//! retries and bounded parallelism.
//!
//! Greedy decoding is requested as `temperature: 0`. Every request is keyed
//! by a SHA-256 digest of the model id, the full prompt text and the decoding
//! parameters; a cached record with that digest is returned without touching
//! the network.

mod cache;
mod http;
pub mod mock;
pub mod wire;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use http::{chat_url, HttpTransport};
use wire::{ChatCompletion, ChatMessage, ChatRequest};

use crate::prompt::PromptPackage;

pub const ENV_ENDPOINT_URL: &str = "ABSA_ENDPOINT_URL";
pub const ENV_API_KEY: &str = "ABSA_API_KEY";
pub const ENV_MODEL: &str = "ABSA_MODEL";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl TransportError {
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => matches!(code, 408 | 409 | 425 | 429 | 500..=599),
            TransportError::Network(_) => true,
            TransportError::Decode(_) => false,
        }
    }

    fn is_auth(&self) -> bool {
        matches!(self, TransportError::Status { code: 401 | 403, .. })
    }
}

/// Sends one chat request. Implementations must be shareable across threads.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatCompletion, TransportError>;
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint unreachable after {attempts} attempt(s): {last}")]
    EndpointUnreachable { attempts: u32, last: TransportError },
    #[error("authentication rejected: {0}")]
    AuthFailure(TransportError),
    #[error("response truncated at the token limit (request {digest})")]
    ResponseTruncated { digest: String },
    #[error("request failed: {0}")]
    Rejected(TransportError),
    #[error("offline and request {0} is not cached")]
    CacheMiss(String),
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
    #[error("invalid endpoint configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Base delay of the exponential backoff between retries.
    pub backoff_ms: u64,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            max_tokens: 512,
            timeout_secs: 120.0,
            max_retries: 3,
            max_in_flight: 4,
            backoff_ms: 500,
            api_key: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_in_flight < 1 {
            return Err(ClientError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(ClientError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Overrides URL, model and token from the environment when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ENV_ENDPOINT_URL) {
            self.base_url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            self.model = model;
        }
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            self.api_key = Some(key);
        }
    }
}

/// Parameters that shape decoding and therefore the cache key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f32,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DecodingParams {
    pub fn greedy(max_tokens: u32, seed: Option<u64>) -> Self {
        DecodingParams {
            temperature: 0.0,
            max_tokens,
            seed,
        }
    }
}

pub fn request_digest(model: &str, prompt: &str, params: &DecodingParams) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model: &'a str,
        prompt: &'a str,
        params: &'a DecodingParams,
    }
    let bytes = serde_json::to_vec(&Key { model, prompt, params }).expect("key serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub digest: String,
    pub model: String,
    pub params: DecodingParams,
    pub prompt: String,
    pub response: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub timestamp: String,
}

pub struct Client {
    config: EndpointConfig,
    transport: Arc<dyn Transport>,
    cache: Option<ResponseCache>,
    offline: bool,
    network_calls: AtomicUsize,
}

impl Client {
    pub fn new(config: EndpointConfig, transport: Arc<dyn Transport>) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(Client {
            config,
            transport,
            cache: None,
            offline: false,
            network_calls: AtomicUsize::new(0),
        })
    }

    pub fn http(config: EndpointConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let transport = HttpTransport::new(&config.base_url, config.api_key.clone(), config.timeout())
            .map_err(|e| ClientError::InvalidConfig(e.to_string()))?;
        Self::new(config, Arc::new(transport))
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// In offline mode a cache miss is an error instead of a request.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Requests actually handed to the transport, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn params(&self, seed: Option<u64>) -> DecodingParams {
        DecodingParams::greedy(self.config.max_tokens, seed)
    }

    pub fn complete(&self, package: &PromptPackage, seed: Option<u64>) -> Result<CompletionRecord, ClientError> {
        self.complete_prompt(&package.render(), seed)
    }

    pub fn complete_prompt(&self, prompt: &str, seed: Option<u64>) -> Result<CompletionRecord, ClientError> {
        let params = self.params(seed);
        let digest = request_digest(&self.config.model, prompt, &params);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&digest)? {
                return Ok(hit);
            }
        }
        if self.offline {
            return Err(ClientError::CacheMiss(digest));
        }

        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            seed: params.seed,
        };
        let started = Instant::now();
        let max_attempts = self.config.max_retries + 1;
        let mut attempts = 0;
        let completion = loop {
            attempts += 1;
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match self.transport.send(&request) {
                Ok(c) => break c,
                Err(e) if e.is_auth() => return Err(ClientError::AuthFailure(e)),
                Err(e) if e.is_transient() => {
                    if attempts >= max_attempts {
                        return Err(ClientError::EndpointUnreachable { attempts, last: e });
                    }
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    log::debug!("attempt {attempts} failed ({e}); retrying in {delay} ms");
                    thread::sleep(Duration::from_millis(delay));
                }
                Err(e) => return Err(ClientError::Rejected(e)),
            }
        };
        if completion.finish_reason.as_deref() == Some("length") {
            return Err(ClientError::ResponseTruncated { digest });
        }

        let record = CompletionRecord {
            digest,
            model: self.config.model.clone(),
            params,
            prompt: prompt.to_string(),
            response: completion.content,
            latency_ms: started.elapsed().as_millis() as u64,
            attempts,
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        if let Some(cache) = &self.cache {
            cache.put(&record)?;
        }
        Ok(record)
    }

    /// Completes every package with at most `max_in_flight` concurrent
    /// requests. Results come back in input order; one failure does not stop
    /// the rest.
    pub fn batch_complete(
        &self,
        packages: &[PromptPackage],
        seed: Option<u64>,
    ) -> Vec<Result<CompletionRecord, ClientError>> {
        let prompts: Vec<String> = packages.iter().map(PromptPackage::render).collect();
        self.batch_complete_prompts(&prompts, seed)
    }

    pub fn batch_complete_prompts(
        &self,
        prompts: &[String],
        seed: Option<u64>,
    ) -> Vec<Result<CompletionRecord, ClientError>> {
        let workers = self.config.max_in_flight.min(prompts.len()).max(1);
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(prompt) = prompts.get(i) else { break };
                    let result = self.complete_prompt(prompt, seed);
                    if tx.send((i, result)).is_err() {
                        break;
                    }
                });
            }
        });
        drop(tx);
        let mut slots: Vec<Option<Result<CompletionRecord, ClientError>>> =
            (0..prompts.len()).map(|_| None).collect();
        for (i, result) in rx {
            slots[i] = Some(result);
        }
        slots
            .into_iter()
            .map(|s| s.expect("every prompt yields a result"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{MockReply, MockTransport};
    use super::*;

    fn config() -> EndpointConfig {
        EndpointConfig {
            backoff_ms: 1,
            max_in_flight: 8,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn digest_depends_on_every_component() {
        let p = DecodingParams::greedy(100, None);
        let base = request_digest("m", "prompt", &p);
        assert_eq!(base, request_digest("m", "prompt", &p));
        assert_ne!(base, request_digest("m2", "prompt", &p));
        assert_ne!(base, request_digest("m", "prompt ", &p));
        assert_ne!(base, request_digest("m", "prompt", &DecodingParams::greedy(101, None)));
        assert_ne!(base, request_digest("m", "prompt", &DecodingParams::greedy(100, Some(1))));
    }

    #[test]
    fn cache_serves_repeat_requests() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockTransport::new(|_| MockReply::content("Sentiment elements: []")));
        let client = Client::new(config(), mock.clone())
            .unwrap()
            .with_cache(ResponseCache::open(dir.path()).unwrap());
        let a = client.complete_prompt("hello", None).unwrap();
        let b = client.complete_prompt("hello", None).unwrap();
        assert_eq!(a, b);
        assert_eq!(mock.calls(), 1);
        assert_eq!(client.cache().unwrap().len().unwrap(), 1);
    }

    #[test]
    fn retries_transient_failures() {
        let mock = Arc::new(MockTransport::scripted(vec![MockReply::Status(500), MockReply::content("ok")]));
        let client = Client::new(config(), mock.clone()).unwrap();
        let r = client.complete_prompt("x", None).unwrap();
        assert_eq!(r.attempts, 2);
        assert_eq!(r.response, "ok");
    }

    #[test]
    fn gives_up_after_retries() {
        let mock = Arc::new(MockTransport::new(|_| MockReply::Status(503)));
        let cfg = EndpointConfig {
            max_retries: 2,
            ..config()
        };
        let client = Client::new(cfg, mock.clone()).unwrap();
        match client.complete_prompt("x", None) {
            Err(ClientError::EndpointUnreachable { attempts: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn auth_and_truncation_are_not_retried() {
        let mock = Arc::new(MockTransport::new(|_| MockReply::Status(401)));
        let client = Client::new(config(), mock.clone()).unwrap();
        assert!(matches!(client.complete_prompt("x", None), Err(ClientError::AuthFailure(_))));
        assert_eq!(mock.calls(), 1);

        let mock = Arc::new(MockTransport::new(|_| MockReply::Truncated("Sentiment elements: [(".into())));
        let client = Client::new(config(), mock).unwrap();
        assert!(matches!(
            client.complete_prompt("x", None),
            Err(ClientError::ResponseTruncated { .. })
        ));
    }

    #[test]
    fn offline_miss() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockTransport::new(|_| MockReply::content("x")));
        let client = Client::new(config(), mock.clone())
            .unwrap()
            .with_cache(ResponseCache::open(dir.path()).unwrap())
            .offline(true);
        assert!(matches!(client.complete_prompt("x", None), Err(ClientError::CacheMiss(_))));
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn rejects_bad_config() {
        let mock = Arc::new(MockTransport::new(|_| MockReply::content("x")));
        let cfg = EndpointConfig {
            max_in_flight: 0,
            ..config()
        };
        assert!(matches!(Client::new(cfg, mock.clone()), Err(ClientError::InvalidConfig(_))));
        let cfg = EndpointConfig {
            timeout_secs: 0.0,
            ..config()
        };
        assert!(matches!(Client::new(cfg, mock), Err(ClientError::InvalidConfig(_))));
    }
}
