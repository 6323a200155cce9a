use std::sync::Arc;

use super::{rough_tokens, Backend, BackendReply, GatewayError, GenerationRequest, LlmRoleConfig, Role};

/// Everything a script may look at. The reply must depend on nothing else.
#[derive(Debug, Clone, Copy)]
pub struct ScriptCall<'a> {
    pub role: Role,
    pub prompt: &'a str,
    pub digest: &'a str,
    pub seed: u64,
}

pub trait Script: Send + Sync {
    fn respond(&self, call: &ScriptCall<'_>) -> String;
}

/// Replies with the same text to everything.
#[derive(Debug, Clone)]
pub struct ConstantScript(pub String);

impl Script for ConstantScript {
    fn respond(&self, _call: &ScriptCall<'_>) -> String {
        self.0.clone()
    }
}

/// Adapts a closure into a [`Script`].
pub struct FnScript<F>(pub F);

impl<F> Script for FnScript<F>
where
    F: Fn(&ScriptCall<'_>) -> String + Send + Sync,
{
    fn respond(&self, call: &ScriptCall<'_>) -> String {
        (self.0)(call)
    }
}

/// Deterministic offline backend: the reply is a function of the request
/// digest, prompt and seed.
#[derive(Clone)]
pub struct ScriptedBackend {
    script: Arc<dyn Script>,
    seed: u64,
}

impl ScriptedBackend {
    pub fn new(script: Arc<dyn Script>, seed: u64) -> Self {
        Self { script, seed }
    }
}

impl Backend for ScriptedBackend {
    fn tag(&self) -> &str {
        "scripted"
    }

    fn generate(
        &self,
        _config: &LlmRoleConfig,
        request: &GenerationRequest,
        digest: &str,
    ) -> Result<BackendReply, GatewayError> {
        let text = self.script.respond(&ScriptCall {
            role: request.role,
            prompt: &request.prompt,
            digest,
            seed: self.seed,
        });
        Ok(BackendReply {
            prompt_tokens: rough_tokens(&request.prompt),
            completion_tokens: rough_tokens(&text),
            text,
        })
    }
}
