use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::warn;

use super::{rough_tokens, Backend, BackendReply, GatewayError, GenerationRequest, LlmRoleConfig};

/// Exponential backoff with multiplicative jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    /// Fractional jitter; 0.25 draws each delay from ±25% of nominal.
    pub jitter: f64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_backoff_ms: 500,
            jitter: 0.25,
            timeout_secs: 120,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.base_backoff_ms as f64 * 2f64.powi(retry as i32);
        let factor = if self.jitter > 0.0 {
            rand::rng().random_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        Duration::from_micros((nominal * factor * 1000.0).max(0.0) as u64)
    }
}

/// 429 and every 5xx are worth retrying; everything else is final.
pub fn is_transient(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

/// OpenAI-compatible chat-completion client. One user message per call.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(retry: RetryPolicy) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(retry.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Backend {
                status: None,
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { client, retry })
    }

    fn url(endpoint: &str) -> String {
        let base = endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(BackendReply),
    Retry { status: Option<u16>, message: String },
}

impl HttpBackend {
    fn attempt(
        &self,
        url: &str,
        key: Option<&str>,
        body: &serde_json::Value,
        request: &GenerationRequest,
        attempts: u32,
    ) -> Result<Attempt, GatewayError> {
        let mut post = self.client.post(url).json(body);
        if let Some(key) = key {
            post = post.bearer_auth(key);
        }
        let resp = match post.send() {
            Ok(resp) => resp,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Ok(Attempt::Retry { status: None, message: e.to_string() });
            }
            Err(e) => return Err(GatewayError::Protocol(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| GatewayError::Protocol(format!("reading body: {e}")))?;
        if is_transient(status) {
            return Ok(Attempt::Retry { status: Some(status), message: snippet(&text) });
        }
        if !(200..300).contains(&status) {
            return Err(GatewayError::Backend {
                status: Some(status),
                attempts: attempts + 1,
                message: snippet(&text),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Protocol(format!("{e}: {}", snippet(&text))))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("response has no message content".into()))?;
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (rough_tokens(&request.prompt), rough_tokens(&content)),
        };
        Ok(Attempt::Done(BackendReply { text: content, prompt_tokens, completion_tokens }))
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

impl Backend for HttpBackend {
    fn tag(&self) -> &str {
        "http"
    }

    fn generate(
        &self,
        config: &LlmRoleConfig,
        request: &GenerationRequest,
        _digest: &str,
    ) -> Result<BackendReply, GatewayError> {
        // An empty variable name means the endpoint takes no key (local servers).
        let key = match config.api_key_env.as_str() {
            "" => None,
            var => Some(std::env::var(var).map_err(|_| GatewayError::MissingApiKey(var.to_string()))?),
        };
        let url = Self::url(&config.endpoint);
        let body = json!({
            "model": request.model_name,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut retries = 0;
        loop {
            match self.attempt(&url, key.as_deref(), &body, request, retries)? {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Retry { status, message } => {
                    if retries >= self.retry.max_retries {
                        return Err(GatewayError::Backend {
                            status,
                            attempts: retries + 1,
                            message,
                        });
                    }
                    warn!(role = %request.role, retry = retries, ?status, "transient failure, backing off");
                    std::thread::sleep(self.retry.delay(retries));
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transient_statuses() {
        assert!(is_transient(429));
        assert!(is_transient(500));
        assert!(is_transient(503));
        assert!(!is_transient(400));
        assert!(!is_transient(401));
        assert!(!is_transient(404));
    }

    #[test]
    fn backoff_stays_within_jitter_band() {
        let policy = RetryPolicy::default();
        for retry in 0..4 {
            let nominal = 500.0 * 2f64.powi(retry as i32);
            let d = policy.delay(retry).as_secs_f64() * 1000.0;
            assert!(d >= nominal * 0.75 - 1e-6 && d <= nominal * 1.25 + 1e-6, "{d} vs {nominal}");
        }
    }

    #[test]
    fn url_joining() {
        assert_eq!(HttpBackend::url("http://x/v1/"), "http://x/v1/chat/completions");
        assert_eq!(HttpBackend::url("http://x/v1/chat/completions"), "http://x/v1/chat/completions");
    }
}
