//! The LLM boundary shared by every role.
//!
//! All three roles (base classifier, actor, optimizer) go through one
//! [`Gateway`]. A request is keyed by its [`canonical_digest`]; the gateway
//! answers from its cache when it can and otherwise asks the role's backend.
//! Backends are interchangeable: an OpenAI-compatible HTTP client, a replay
//! backend reading JSON Lines fixtures, or a scripted backend that computes
//! the reply from the request.

mod digest;
mod http;
mod replay;
mod scripted;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use digest::canonical_digest;
pub use http::{HttpBackend, RetryPolicy};
pub use replay::{FixtureRecord, ReplayBackend};
pub use scripted::{ConstantScript, FnScript, Script, ScriptCall, ScriptedBackend};

/// The three model roles of the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Classifies news under the candidate prompt.
    Base,
    /// Writes error feedback (actions).
    Actor,
    /// Rewrites prompts (transitions, resampling, memory summaries).
    Optimizer,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Base, Role::Actor, Role::Optimizer];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Base => "base",
            Role::Actor => "actor",
            Role::Optimizer => "optimizer",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Scripted,
}

/// Per-role model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRoleConfig {
    pub role: Role,
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub api_key_env: String,
    pub backend: BackendKind,
}

impl LlmRoleConfig {
    /// Defaults: the base classifier runs at temperature 0.01, the actor and
    /// optimizer at 1.0.
    pub fn default_for(role: Role) -> Self {
        let (model_name, temperature, max_tokens) = match role {
            Role::Base => ("meta-llama/Meta-Llama-3.1-8B-Instruct", 0.01, 1024),
            Role::Actor | Role::Optimizer => ("gpt-3.5-turbo-0125", 1.0, 2048),
        };
        Self {
            role,
            endpoint: "https://api.openai.com/v1".to_string(),
            model_name: model_name.to_string(),
            temperature,
            max_tokens,
            api_key_env: "OPENAI_API_KEY".to_string(),
            backend: BackendKind::Http,
        }
    }

    pub fn with_backend(mut self, backend: BackendKind) -> Self {
        self.backend = backend;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub role: Role,
    pub model_name: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Zero for the first try; only this field varies across retries.
    pub attempt: u32,
}

impl GenerationRequest {
    pub fn new(config: &LlmRoleConfig, prompt: impl Into<String>) -> Self {
        Self {
            role: config.role,
            model_name: config.model_name.clone(),
            prompt: prompt.into(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            attempt: 0,
        }
    }

    pub fn digest(&self) -> String {
        canonical_digest(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub backend_tag: String,
    pub cache_hit: bool,
}

/// What a backend hands back before the gateway wraps it.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub trait Backend: Send + Sync {
    fn tag(&self) -> &str;

    fn generate(
        &self,
        config: &LlmRoleConfig,
        request: &GenerationRequest,
        digest: &str,
    ) -> Result<BackendReply, GatewayError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no replay fixture for request digest {digest}")]
    FixtureMiss { digest: String },
    #[error("backend failed after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("role `{0}` is not configured")]
    RoleNotConfigured(Role),
    #[error("request prompt is empty")]
    EmptyPrompt,
    #[error("fixture file {path}:{line}: {message}")]
    Fixture {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Call accounting for one role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleStats {
    pub requests: u64,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub failures: u64,
}

struct RoleBinding {
    config: LlmRoleConfig,
    backend: Arc<dyn Backend>,
}

#[derive(Clone)]
struct CachedReply {
    reply: BackendReply,
    tag: String,
}

struct Recorder {
    file: File,
    seen: HashSet<String>,
}

/// Routes requests to per-role backends with a shared digest-keyed cache.
pub struct Gateway {
    roles: BTreeMap<Role, RoleBinding>,
    cache: Option<RwLock<HashMap<String, CachedReply>>>,
    stats: Mutex<BTreeMap<Role, RoleStats>>,
    max_in_flight: usize,
    recorder: Option<Mutex<Recorder>>,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self {
            roles: BTreeMap::new(),
            cache: Some(RwLock::new(HashMap::new())),
            stats: Mutex::new(BTreeMap::new()),
            max_in_flight: 4,
            recorder: None,
        }
    }

    pub fn with_role(mut self, config: LlmRoleConfig, backend: Arc<dyn Backend>) -> Self {
        self.roles.insert(config.role, RoleBinding { config, backend });
        self
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache = enabled.then(|| RwLock::new(HashMap::new()));
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.max_in_flight = limit.max(1);
        self
    }

    /// Appends every fresh backend reply to `path` as a replay fixture.
    pub fn record_to(mut self, path: &Path) -> Result<Self, GatewayError> {
        let mut seen = HashSet::new();
        if path.exists() {
            for record in replay::read_fixtures(path)? {
                seen.insert(record.digest);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.recorder = Some(Mutex::new(Recorder { file, seen }));
        Ok(self)
    }

    pub fn role_config(&self, role: Role) -> Result<&LlmRoleConfig, GatewayError> {
        self.roles
            .get(&role)
            .map(|b| &b.config)
            .ok_or(GatewayError::RoleNotConfigured(role))
    }

    pub fn has_all_roles(&self) -> bool {
        Role::ALL.iter().all(|r| self.roles.contains_key(r))
    }

    /// Builds a request for `role` using its configured model settings.
    pub fn request(&self, role: Role, prompt: impl Into<String>) -> Result<GenerationRequest, GatewayError> {
        Ok(GenerationRequest::new(self.role_config(role)?, prompt))
    }

    pub fn stats(&self) -> BTreeMap<Role, RoleStats> {
        self.stats.lock().expect("stats lock").clone()
    }

    /// Answers from the cache when possible, otherwise from the backend.
    pub fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        self.complete_inner(request, true)
    }

    /// Skips the cache lookup (the reply still refreshes the cache). Used for
    /// re-asks after an unparseable reply.
    pub fn complete_fresh(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        self.complete_inner(request, false)
    }

    /// Completes several requests, at most `max_in_flight` at a time. Results
    /// come back in request order.
    pub fn complete_all(
        &self,
        requests: &[GenerationRequest],
        use_cache: bool,
    ) -> Vec<Result<GenerationResponse, GatewayError>> {
        if self.max_in_flight <= 1 || requests.len() <= 1 {
            return requests.iter().map(|r| self.complete_inner(r, use_cache)).collect();
        }
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(self.max_in_flight) {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|r| scope.spawn(move || self.complete_inner(r, use_cache)))
                    .collect();
                for h in handles {
                    out.push(h.join().expect("gateway worker panicked"));
                }
            });
        }
        out
    }

    fn bump(&self, role: Role, f: impl FnOnce(&mut RoleStats)) {
        let mut stats = self.stats.lock().expect("stats lock");
        f(stats.entry(role).or_default());
    }

    fn complete_inner(
        &self,
        request: &GenerationRequest,
        use_cache: bool,
    ) -> Result<GenerationResponse, GatewayError> {
        if request.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let binding = self
            .roles
            .get(&request.role)
            .ok_or(GatewayError::RoleNotConfigured(request.role))?;
        self.bump(request.role, |s| s.requests += 1);
        let digest = canonical_digest(request);

        if use_cache {
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.read().expect("cache lock").get(&digest) {
                    self.bump(request.role, |s| s.cache_hits += 1);
                    return Ok(GenerationResponse {
                        text: hit.reply.text.clone(),
                        prompt_tokens: hit.reply.prompt_tokens,
                        completion_tokens: hit.reply.completion_tokens,
                        latency_ms: 0,
                        backend_tag: hit.tag.clone(),
                        cache_hit: true,
                    });
                }
            }
        }

        self.bump(request.role, |s| s.backend_calls += 1);
        let started = Instant::now();
        let reply = match binding.backend.generate(&binding.config, request, &digest) {
            Ok(reply) => reply,
            Err(e) => {
                self.bump(request.role, |s| s.failures += 1);
                return Err(e);
            }
        };
        let latency_ms = match binding.config.backend {
            BackendKind::Http => started.elapsed().as_millis() as u64,
            _ => 0,
        };
        let tag = binding.backend.tag().to_string();

        if let Some(recorder) = &self.recorder {
            let mut rec = recorder.lock().expect("recorder lock");
            if rec.seen.insert(digest.clone()) {
                let line = serde_json::to_string(&FixtureRecord {
                    digest: digest.clone(),
                    response: reply.text.clone(),
                })
                .expect("fixture serializes");
                writeln!(rec.file, "{line}")?;
            }
        }
        if let Some(cache) = &self.cache {
            cache.write().expect("cache lock").insert(
                digest,
                CachedReply {
                    reply: reply.clone(),
                    tag: tag.clone(),
                },
            );
        }
        Ok(GenerationResponse {
            text: reply.text,
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            latency_ms,
            backend_tag: tag,
            cache_hit: false,
        })
    }
}

/// Whitespace token count, used by the offline backends.
pub(crate) fn rough_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        calls: AtomicUsize,
    }

    impl Backend for Counting {
        fn tag(&self) -> &str {
            "counting"
        }
        fn generate(
            &self,
            _config: &LlmRoleConfig,
            request: &GenerationRequest,
            _digest: &str,
        ) -> Result<BackendReply, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(BackendReply {
                text: format!("{}#{n}", request.prompt.len()),
                prompt_tokens: 1,
                completion_tokens: 1,
            })
        }
    }

    fn gateway_with(backend: Arc<Counting>) -> Gateway {
        Gateway::new().with_role(
            LlmRoleConfig::default_for(Role::Base).with_backend(BackendKind::Scripted),
            backend,
        )
    }

    #[test]
    fn repeated_request_hits_backend_once() {
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let gw = gateway_with(backend.clone());
        let req = gw.request(Role::Base, "hello").unwrap();
        let a = gw.complete(&req).unwrap();
        let b = gw.complete(&req).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert!(!a.cache_hit);
        assert!(b.cache_hit);
        assert_eq!(a.text, b.text);
        let stats = gw.stats()[&Role::Base];
        assert_eq!(stats.backend_calls, 1);
        assert_eq!(stats.cache_hits, 1);
    }

    #[test]
    fn fresh_completion_bypasses_cache() {
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let gw = gateway_with(backend.clone());
        let req = gw.request(Role::Base, "hello").unwrap();
        gw.complete(&req).unwrap();
        gw.complete_fresh(&req).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn unconfigured_role_is_an_error() {
        let gw = Gateway::new();
        assert!(matches!(gw.request(Role::Actor, "x"), Err(GatewayError::RoleNotConfigured(Role::Actor))));
    }

    #[test]
    fn complete_all_preserves_order() {
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let gw = gateway_with(backend).with_max_in_flight(3);
        let reqs: Vec<_> = (1..=10)
            .map(|n| gw.request(Role::Base, "x".repeat(n)).unwrap())
            .collect();
        let out = gw.complete_all(&reqs, true);
        for (n, r) in (1..=10).zip(out) {
            assert!(r.unwrap().text.starts_with(&format!("{n}#")));
        }
    }

    #[test]
    fn role_defaults() {
        assert_eq!(LlmRoleConfig::default_for(Role::Base).temperature, 0.01);
        assert_eq!(LlmRoleConfig::default_for(Role::Actor).temperature, 1.0);
        assert_eq!(LlmRoleConfig::default_for(Role::Optimizer).temperature, 1.0);
    }
}
